#pragma once

#include <utility>
#include <vector>

#include "common.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "ops.hpp"

namespace anchorscope {

/// Normalizer applied before unembedding. `learned` uses the model's final
/// LayerNorm parameters; `plain` drops gain and bias for a scale-free view.
enum class SigmaKind { learned, plain };

inline SigmaKind sigma_from_string(const std::string& s) {
    if (s == "learned") return SigmaKind::learned;
    if (s == "plain") return SigmaKind::plain;
    fail("unknown sigma variant: " + s + " (expected learned or plain)");
}

/// Direct logit projection of residual-space vectors: lens(v) = W_U sigma(v).
/// Works on any vector living in the residual stream, which is what makes
/// weight rows and single-head outputs readable as token preferences.
class Lens {
public:
    explicit Lens(const ModelWeights& w, SigmaKind sigma = SigmaKind::learned)
        : w_(&w), sigma_(sigma) {}

    SigmaKind sigma_kind() const { return sigma_; }

    Vec sigma(const Vec& v) const {
        return sigma_ == SigmaKind::learned ? layer_norm(v, w_->lnf_g, w_->lnf_b)
                                            : plain_layer_norm(v);
    }

    /// Full vocabulary projection, one logit per token.
    Vec project(const Vec& v) const {
        return (w_->wte * sigma(v).transpose()).transpose();
    }

    /// Single-token logit u_t . sigma(v) without the full matvec.
    float logit(const Vec& v, int token_id) const {
        return logit_from_sigma(sigma(v), token_id);
    }

    float logit_from_sigma(const Vec& sigma_v, int token_id) const {
        if (token_id < 0 || token_id >= w_->wte.rows())
            fail("token id out of range for lens: " + std::to_string(token_id));
        return w_->wte.row(token_id).dot(sigma_v);
    }

    /// Top-k (token id, logit) pairs under the lens, ties toward smaller id.
    std::vector<std::pair<int, float>> top_k(const Vec& v, int k) const {
        const Vec logits = project(v);
        std::vector<std::pair<int, float>> out;
        for (int id : top_k_indices(logits, k)) out.emplace_back(id, logits[id]);
        return out;
    }

private:
    const ModelWeights* w_;
    SigmaKind sigma_;
};

} // namespace anchorscope
