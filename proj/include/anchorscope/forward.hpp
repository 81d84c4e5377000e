#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "common.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "ops.hpp"

namespace anchorscope {

/// How much of the pass to record. Evaluation loops run at `none`, discovery
/// at `final_position`, and the attention analyses at `full`.
enum class Capture { none, final_position, full };

/// In-pass interventions. Value patches add a delta to one row of a layer's
/// MLP output projection for the duration of the pass, realizing edited
/// value vectors without mutating shared weights. Pattern swaps exchange two
/// attention weights in one head's final-row pattern after its softmax.
struct ForwardHooks {
    struct ValuePatch {
        int layer = 0;
        int dim = 0; // row of w_mlp_out, i.e. index n of v^{l,n}
        Vec delta;   // v' = v + delta
    };
    struct PatternSwap {
        int layer = 0;
        int head = 0;
        int pos_a = 0;
        int pos_b = 0;
    };
    std::vector<ValuePatch> value_patches;
    std::vector<PatternSwap> pattern_swaps;
    /// Audit mode: exchange the two per-source summands r_{T,pos_a} and
    /// r_{T,pos_b} instead of the pattern weights. Their sum, and therefore
    /// the head output, is unchanged; only the recorded per-source
    /// contributions differ. Kept to demonstrate that reading the swap as a
    /// literal exchange of weighted values cannot move the prediction.
    bool swap_literal = false;

    bool empty() const { return value_patches.empty() && pattern_swaps.empty(); }
};

struct LayerTrace {
    Vec resid;     // x after this block, final position
    Vec attn_out;  // attention branch output a_T, biases included
    Vec mlp_out;   // MLP branch output m_T, biases included
    Vec mlp_coeff; // post-GELU coefficients k_T over the 4d hidden dims
    Mat head_r;    // (H, d) bias-free per-head contributions r^{l,h}_T
    Mat attn_row;  // (H, T) final-row attention patterns
    // Capture::full only:
    std::vector<Mat> patterns; // per head, (T, T) full attention
    std::vector<Mat> source_r; // per head, (T, d) bias-free per-source r_{T,j}
};

struct ActivationTrace {
    Capture level = Capture::none;
    std::vector<int> ids;
    Vec x0;       // embedding stream at final position
    std::vector<LayerTrace> layers;
    Vec final_ln; // sigma(x^L_T), learned final LayerNorm applied
    Vec logits;   // (V) next-token logits at the final position
};

/// Per-layer attention bias bucket b_V W_O + b_O. Because each softmax row
/// sums to one, this is exactly the gap between the summed bias-free head
/// contributions and the full attention output.
inline Vec attn_bias_bucket(const BlockWeights& b) {
    const int d = static_cast<int>(b.w_attn_out.rows());
    const Vec b_v = b.b_qkv.segment(2 * d, d);
    return b_v * b.w_attn_out + b.b_attn_out;
}

/// One instrumented forward pass. Single-threaded by design; callers
/// parallelize across prompts.
inline ActivationTrace forward(const ModelWeights& w, const std::vector<int>& ids,
                               Capture cap = Capture::none,
                               const ForwardHooks* hooks = nullptr) {
    const ModelConfig& cfg = w.cfg;
    const int T = static_cast<int>(ids.size());
    const int d = cfg.d_model;
    const int dh = cfg.d_head();
    const int H = cfg.n_head;
    if (T < 1) fail("forward needs at least one token");
    if (T > cfg.n_ctx) fail("prompt length " + std::to_string(T) + " exceeds context " +
                            std::to_string(cfg.n_ctx));
    for (int id : ids)
        if (id < 0 || id >= cfg.n_vocab) fail("token id out of range: " + std::to_string(id));
    if (hooks) {
        for (const auto& p : hooks->value_patches) {
            if (p.layer < 0 || p.layer >= cfg.n_layer)
                fail("value patch layer out of range: " + std::to_string(p.layer));
            if (p.dim < 0 || p.dim >= cfg.d_mlp())
                fail("value patch dim out of range: " + std::to_string(p.dim));
            if (p.delta.size() != d) fail("value patch delta has wrong length");
        }
        for (const auto& s : hooks->pattern_swaps) {
            if (s.layer < 0 || s.layer >= cfg.n_layer)
                fail("pattern swap layer out of range: " + std::to_string(s.layer));
            if (s.head < 0 || s.head >= H)
                fail("pattern swap head out of range: " + std::to_string(s.head));
            if (s.pos_a < 0 || s.pos_a >= T || s.pos_b < 0 || s.pos_b >= T)
                fail("pattern swap position out of range");
        }
    }

    ActivationTrace tr;
    tr.level = cap;
    tr.ids = ids;

    Mat x(T, d);
    for (int t = 0; t < T; ++t) x.row(t) = w.wte.row(ids[t]) + w.wpe.row(t);
    if (cap != Capture::none) tr.x0 = x.row(T - 1);
    if (cap != Capture::none) tr.layers.resize(static_cast<std::size_t>(cfg.n_layer));

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Mat attn_concat(T, d);

    for (int l = 0; l < cfg.n_layer; ++l) {
        const BlockWeights& b = w.blocks[static_cast<std::size_t>(l)];
        LayerTrace* lt = cap != Capture::none ? &tr.layers[static_cast<std::size_t>(l)] : nullptr;
        if (lt) {
            lt->head_r.resize(H, d);
            lt->attn_row.resize(H, T);
            if (cap == Capture::full) {
                lt->patterns.resize(static_cast<std::size_t>(H));
                lt->source_r.resize(static_cast<std::size_t>(H));
            }
        }

        const Mat xn = layer_norm_rows(x, b.ln1_g, b.ln1_b);
        Mat qkv = xn * b.w_qkv;
        qkv.rowwise() += b.b_qkv;

        for (int h = 0; h < H; ++h) {
            const auto q = qkv.block(0, h * dh, T, dh);
            const auto k = qkv.block(0, d + h * dh, T, dh);
            const auto v = qkv.block(0, 2 * d + h * dh, T, dh);

            Mat a = q * k.transpose() * scale;
            for (int i = 0; i < T; ++i) {
                if (i + 1 < T)
                    a.row(i).segment(i + 1, T - 1 - i).setConstant(
                        -std::numeric_limits<float>::infinity());
                softmax_row(a.row(i));
            }
            if (hooks && !hooks->swap_literal) {
                for (const auto& s : hooks->pattern_swaps)
                    if (s.layer == l && s.head == h)
                        std::swap(a(T - 1, s.pos_a), a(T - 1, s.pos_b));
            }

            attn_concat.block(0, h * dh, T, dh) = a * v;

            if (lt) {
                const auto w_o = b.w_attn_out.middleRows(h * dh, dh);
                const Vec b_v = b.b_qkv.segment(2 * d + h * dh, dh);
                lt->attn_row.row(h) = a.row(T - 1);
                lt->head_r.row(h) =
                    (attn_concat.block(T - 1, h * dh, 1, dh) - b_v) * w_o;
                if (cap == Capture::full) {
                    lt->patterns[static_cast<std::size_t>(h)] = a;
                    Mat sr(T, d);
                    for (int j = 0; j < T; ++j)
                        sr.row(j) = a(T - 1, j) * ((v.row(j) - b_v) * w_o);
                    if (hooks && hooks->swap_literal)
                        for (const auto& s : hooks->pattern_swaps)
                            if (s.layer == l && s.head == h)
                                sr.row(s.pos_a).swap(sr.row(s.pos_b));
                    lt->source_r[static_cast<std::size_t>(h)] = std::move(sr);
                }
            }
        }

        Mat attn_out = attn_concat * b.w_attn_out;
        attn_out.rowwise() += b.b_attn_out;
        x += attn_out;
        if (lt) lt->attn_out = attn_out.row(T - 1);

        const Mat xn2 = layer_norm_rows(x, b.ln2_g, b.ln2_b);
        Mat coeff = xn2 * b.w_fc;
        coeff.rowwise() += b.b_fc;
        gelu_inplace(coeff);
        Mat mlp = coeff * b.w_mlp_out;
        mlp.rowwise() += b.b_mlp_out;
        if (hooks) {
            for (const auto& p : hooks->value_patches)
                if (p.layer == l) mlp += coeff.col(p.dim) * p.delta;
        }
        x += mlp;
        if (lt) {
            lt->mlp_coeff = coeff.row(T - 1);
            lt->mlp_out = mlp.row(T - 1);
            lt->resid = x.row(T - 1);
        }
    }

    const Vec final_resid = x.row(T - 1);
    tr.final_ln = layer_norm(final_resid, w.lnf_g, w.lnf_b);
    tr.logits = (w.wte * tr.final_ln.transpose()).transpose();
    return tr;
}

/// Logits-only convenience wrapper.
inline Vec next_token_logits(const ModelWeights& w, const std::vector<int>& ids,
                             const ForwardHooks* hooks = nullptr) {
    return forward(w, ids, Capture::none, hooks).logits;
}

} // namespace anchorscope
