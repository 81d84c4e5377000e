#pragma once

#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

#include <anchorscope/common.hpp>
#include <anchorscope/model.hpp>
#include <anchorscope/tokenizer.hpp>

namespace testutil {

inline std::string fixture_path(const std::string& name) {
    return std::string(ANCHORSCOPE_SOURCE_DIR) + "/tests/fixtures/" + name;
}

inline std::string banks_dir() { return std::string(ANCHORSCOPE_SOURCE_DIR) + "/data/banks"; }

inline bool model_present(const std::string& name) {
    namespace fs = std::filesystem;
    const auto dir = anchorscope::model_dir(name);
    return fs::exists(dir / "model.safetensors") && fs::exists(dir / "vocab.json") &&
           fs::exists(dir / "merges.txt");
}

/// Pretrained gpt2 weights, loaded once per test binary run.
inline const anchorscope::ModelWeights& gpt2() {
    static const anchorscope::ModelWeights w = anchorscope::load_model("gpt2");
    return w;
}

inline const anchorscope::Vocab& gpt2_vocab() {
    static const anchorscope::Vocab v = anchorscope::Vocab::load(
        (anchorscope::model_dir("gpt2") / "vocab.json").string(),
        (anchorscope::model_dir("gpt2") / "merges.txt").string());
    return v;
}

/// Small random weights for architecture-level invariants that do not need
/// a pretrained checkpoint.
inline anchorscope::ModelWeights random_weights(const anchorscope::ModelConfig& cfg,
                                                std::uint64_t seed) {
    using anchorscope::Mat;
    using anchorscope::Vec;
    anchorscope::Rng rng(seed);
    auto mat = [&](Eigen::Index r, Eigen::Index c, float s) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * s;
        return m;
    };
    auto vec = [&](Eigen::Index n, float s, float base = 0.0f) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = base + rng.normal() * s;
        return v;
    };

    anchorscope::ModelWeights w;
    w.cfg = cfg;
    const int d = cfg.d_model;
    w.wte = mat(cfg.n_vocab, d, 0.1f);
    w.wpe = mat(cfg.n_ctx, d, 0.02f);
    w.blocks.resize(static_cast<std::size_t>(cfg.n_layer));
    for (auto& b : w.blocks) {
        b.ln1_g = vec(d, 0.05f, 1.0f);
        b.ln1_b = vec(d, 0.05f);
        b.ln2_g = vec(d, 0.05f, 1.0f);
        b.ln2_b = vec(d, 0.05f);
        b.w_qkv = mat(d, 3 * d, 0.08f);
        b.b_qkv = vec(3 * d, 0.05f);
        b.w_attn_out = mat(d, d, 0.08f);
        b.b_attn_out = vec(d, 0.05f);
        b.w_fc = mat(d, 4 * d, 0.08f);
        b.b_fc = vec(4 * d, 0.05f);
        b.w_mlp_out = mat(4 * d, d, 0.08f);
        b.b_mlp_out = vec(d, 0.05f);
    }
    w.lnf_g = vec(d, 0.05f, 1.0f);
    w.lnf_b = vec(d, 0.05f);
    return w;
}

inline anchorscope::ModelConfig tiny_config() {
    anchorscope::ModelConfig c;
    c.name = "tiny";
    c.n_layer = 3;
    c.n_head = 2;
    c.d_model = 16;
    c.n_ctx = 32;
    c.n_vocab = 23;
    return c;
}

} // namespace testutil

#define REQUIRE_MODEL(name)                                          \
    do {                                                             \
        if (!testutil::model_present(name))                          \
            SKIP("model " << name << " not present in cache");       \
    } while (0)
