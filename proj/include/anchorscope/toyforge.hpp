#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "discovery.hpp"
#include "forward.hpp"

namespace anchorscope {
namespace toyforge {

/// Planted components speak in post-sigma logit difference ("strength"), the
/// number the threshold-4 rule compares against; the raw residual multiple
/// is solved in closed form below.
struct PlantedMlp {
    int layer = 0;
    int dim = 0;
    double strength = 5.0;
};

struct PlantedHead {
    int layer = 0;
    int head = 0;
    double strength = 5.0;
};

struct ToySpec {
    int n_layer = 3;
    int n_head = 2;
    int d_model = 32;
    int n_vocab = 20; // ids 0..4 are the letter tokens " A".." E"
    std::uint64_t seed = 1;
    std::optional<PlantedMlp> mlp;
    std::optional<PlantedHead> head;

    nlohmann::json to_json() const {
        nlohmann::json j{{"n_layer", n_layer}, {"n_head", n_head},   {"d_model", d_model},
                         {"n_vocab", n_vocab}, {"seed", seed}};
        if (mlp) j["mlp"] = {{"layer", mlp->layer}, {"dim", mlp->dim}, {"strength", mlp->strength}};
        if (head)
            j["head"] = {{"layer", head->layer}, {"head", head->head}, {"strength", head->strength}};
        return j;
    }

    static ToySpec from_json(const nlohmann::json& j) {
        ToySpec s;
        s.n_layer = j.at("n_layer").get<int>();
        s.n_head = j.at("n_head").get<int>();
        s.d_model = j.at("d_model").get<int>();
        s.n_vocab = j.at("n_vocab").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mlp"))
            s.mlp = PlantedMlp{j["mlp"].at("layer").get<int>(), j["mlp"].at("dim").get<int>(),
                               j["mlp"].at("strength").get<double>()};
        if (j.contains("head"))
            s.head = PlantedHead{j["head"].at("layer").get<int>(), j["head"].at("head").get<int>(),
                                 j["head"].at("strength").get<double>()};
        return s;
    }
};

/// Post-sigma logit difference of a residual vector c * u, with u a unit,
/// mean-zero unembedding row: diff(c) = c / sqrt(c^2 / d + eps).
inline double diff_for_raw(int d, double c) {
    return c / std::sqrt(c * c / d + static_cast<double>(kLnEps));
}

/// Inverse of diff_for_raw. Saturation: |diff| < sqrt(d).
inline double raw_for_diff(int d, double diff) {
    const double sat = diff * diff / d;
    if (sat >= 1.0)
        fail("requested toy strength " + format_fixed(diff, 2) + " saturates at sqrt(d)");
    return diff * std::sqrt(static_cast<double>(kLnEps) / (1.0 - sat));
}

struct GroundTruth {
    struct Mlp {
        int layer = 0;
        int dim = 0;
        double coeff = 0.0;      // planted k_T (input-independent)
        double row_scale = 0.0;  // W_out row = row_scale * u_A
        double expected_diff = 0.0;
    };
    struct Head {
        int layer = 0;
        int head = 0;
        double row_scale = 0.0;  // W_O row = row_scale * u_A
        double expected_diff = 0.0;
    };
    std::optional<Mlp> mlp;
    std::optional<Head> head;
};

struct ToyModel {
    ModelWeights weights;
    GroundTruth truth;
};

namespace detail {

/// V orthonormal rows, each orthogonal to the ones vector so LayerNorm never
/// re-centers them. Built by Gram-Schmidt in double precision; needs
/// V <= d - 1 free dimensions.
inline Mat orthonormal_unembedding(int v, int d, Rng& rng) {
    if (v > d - 1) fail("toy d_model too small for near-orthogonality: need d > vocab");
    std::vector<Eigen::VectorXd> rows;
    int attempts = 0;
    while (static_cast<int>(rows.size()) < v) {
        if (++attempts > 20 * v) fail("toy unembedding construction failed to converge");
        Eigen::VectorXd r(d);
        for (int i = 0; i < d; ++i) r[i] = rng.normal();
        r.array() -= r.mean();
        for (const auto& q : rows) r -= q * q.dot(r);
        for (const auto& q : rows) r -= q * q.dot(r);
        const double n = r.norm();
        if (n < 1e-6) continue;
        rows.push_back(r / n);
    }
    Mat out(v, d);
    for (int t = 0; t < v; ++t)
        for (int i = 0; i < d; ++i) out(t, i) = static_cast<float>(rows[static_cast<std::size_t>(t)][i]);
    return out;
}

} // namespace detail

/// Deterministic tiny transformer with planted anchored-bias components.
///
/// Every unembedding row is unit, mean-zero, and orthogonal to the others,
/// so lens projections separate exactly. A planted MLP dim uses a zero key
/// column with bias 2 (coefficient gelu(2) for any input) and writes along
/// u_A; a planted head reads a token-independent value (the summed
/// unembedding basis) so its output is u_A-aligned for any attention
/// pattern. All non-planted weights are noise at 1e-6, which keeps the
/// closed-form diffs exact to well under 1e-4.
inline ToyModel build_toy(const ToySpec& spec) {
    if (spec.n_layer < 1 || spec.n_layer > 4) fail("toy n_layer must be in [1, 4]");
    if (spec.n_head < 1 || spec.n_head > 4) fail("toy n_head must be in [1, 4]");
    if (spec.d_model < 8 || spec.d_model > 64) fail("toy d_model must be in [8, 64]");
    if (spec.n_vocab < 6) fail("toy vocab needs the five letters plus a symbol");
    if (spec.d_model % spec.n_head != 0) fail("toy d_model must divide by n_head");
    const int d = spec.d_model;
    const int dm = 4 * d;
    if (spec.mlp) {
        if (spec.mlp->layer < 0 || spec.mlp->layer >= spec.n_layer)
            fail("planted MLP layer out of range");
        if (spec.mlp->dim < 0 || spec.mlp->dim >= dm) fail("planted MLP dim out of range");
    }
    if (spec.head) {
        if (spec.head->layer < 0 || spec.head->layer >= spec.n_layer)
            fail("planted head layer out of range");
        if (spec.head->head < 0 || spec.head->head >= spec.n_head)
            fail("planted head index out of range");
    }
    if (spec.mlp && spec.head && spec.head->layer > spec.mlp->layer)
        fail("planted head must not sit after the planted MLP layer (value reads would drift)");

    Rng rng(spec.seed);
    ModelWeights w;
    w.cfg.name = "toy";
    w.cfg.n_layer = spec.n_layer;
    w.cfg.n_head = spec.n_head;
    w.cfg.d_model = d;
    w.cfg.n_ctx = 64;
    w.cfg.n_vocab = spec.n_vocab;

    w.wte = detail::orthonormal_unembedding(spec.n_vocab, d, rng);
    w.wpe = Mat::Zero(w.cfg.n_ctx, d);
    w.lnf_g = Vec::Ones(d);
    w.lnf_b = Vec::Zero(d);

    auto noise_mat = [&](Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = static_cast<float>(rng.normal()) * 1e-6f;
        return m;
    };
    w.blocks.resize(static_cast<std::size_t>(spec.n_layer));
    for (auto& b : w.blocks) {
        b.ln1_g = Vec::Ones(d);
        b.ln1_b = Vec::Zero(d);
        b.ln2_g = Vec::Ones(d);
        b.ln2_b = Vec::Zero(d);
        b.w_qkv = noise_mat(d, 3 * d);
        b.b_qkv = Vec::Zero(3 * d);
        b.w_attn_out = noise_mat(d, d);
        b.b_attn_out = Vec::Zero(d);
        b.w_fc = noise_mat(d, dm);
        b.b_fc = Vec::Zero(dm);
        b.w_mlp_out = noise_mat(dm, d);
        b.b_mlp_out = Vec::Zero(d);
    }

    ToyModel out;
    const Vec u_a = w.wte.row(0);

    if (spec.mlp && spec.mlp->strength != 0.0) {
        auto& b = w.blocks[static_cast<std::size_t>(spec.mlp->layer)];
        const double raw = raw_for_diff(d, spec.mlp->strength);
        const double coeff = static_cast<double>(gelu(2.0f));
        b.w_fc.col(spec.mlp->dim).setZero();
        b.b_fc[spec.mlp->dim] = 2.0f;
        const double row_scale = raw / coeff;
        b.w_mlp_out.row(spec.mlp->dim) = static_cast<float>(row_scale) * u_a;
        out.truth.mlp = GroundTruth::Mlp{spec.mlp->layer, spec.mlp->dim, coeff, row_scale,
                                         diff_for_raw(d, raw)};
    }

    if (spec.head && spec.head->strength != 0.0) {
        auto& b = w.blocks[static_cast<std::size_t>(spec.head->layer)];
        const int dh = d / spec.n_head;
        const double raw = raw_for_diff(d, spec.head->strength);
        // Value channel 0 of the planted head reads sum_t u_t scaled so that
        // LayerNorm's gain on a unit mean-zero row cancels: every position's
        // value is exactly 1.
        const double rho = 1.0 / std::sqrt(1.0 / d + static_cast<double>(kLnEps));
        Vec read = Vec::Zero(d);
        for (int t = 0; t < spec.n_vocab; ++t) read += w.wte.row(t);
        b.w_qkv.col(2 * d + spec.head->head * dh) = (read / static_cast<float>(rho)).transpose();
        b.w_attn_out.row(spec.head->head * dh) = static_cast<float>(raw) * u_a;
        out.truth.head = GroundTruth::Head{spec.head->layer, spec.head->head, raw,
                                           diff_for_raw(d, raw)};
    }

    out.weights = std::move(w);
    return out;
}

/// Random symbol prompts carrying letter markers, shaped like prepared MCQ
/// samples: ".. A sym B sym .." with gold = B and a non-letter final token.
inline std::vector<PreparedSample> toy_samples(const ToySpec& spec, int count,
                                               std::uint64_t seed) {
    if (spec.n_vocab < 8) fail("toy prompts need at least three symbol tokens");
    Rng rng(seed);
    std::vector<PreparedSample> out;
    for (int i = 0; i < count; ++i) {
        PreparedSample p;
        p.tag = "toy";
        p.gold = 1;
        p.letter_ids = {0, 1};
        auto sym = [&] { return rng.uniform_int(5, spec.n_vocab - 1); };
        p.ids = {sym(), sym(), 0, sym(), 1, sym(), sym()};
        p.letter_pos = {2, 4};
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace toyforge
} // namespace anchorscope
