#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "linalg.hpp"
#include "safetensors.hpp"

namespace anchorscope {

/// Architecture hyperparameters for one GPT-2 family member.
struct ModelConfig {
    std::string name = "gpt2";
    int n_layer = 12;
    int n_head = 12;
    int d_model = 768;
    int n_ctx = 1024;
    int n_vocab = 50257;

    int d_head() const { return d_model / n_head; }
    int d_mlp() const { return 4 * d_model; }

    static ModelConfig preset(const std::string& name) {
        ModelConfig c;
        c.name = name;
        if (name == "gpt2") {
            c.n_layer = 12; c.n_head = 12; c.d_model = 768;
        } else if (name == "gpt2-medium") {
            c.n_layer = 24; c.n_head = 16; c.d_model = 1024;
        } else if (name == "gpt2-large") {
            c.n_layer = 36; c.n_head = 20; c.d_model = 1280;
        } else if (name == "gpt2-xl") {
            c.n_layer = 48; c.n_head = 25; c.d_model = 1600;
        } else {
            fail("unknown model preset: " + name +
                 " (expected gpt2, gpt2-medium, gpt2-large, or gpt2-xl)");
        }
        return c;
    }
};

/// One transformer block, weights kept in the checkpoint's Conv1D (in, out)
/// orientation. Rows of w_mlp_out are the MLP value vectors v^{l,n}.
struct BlockWeights {
    Vec ln1_g, ln1_b, ln2_g, ln2_b;
    Mat w_qkv;      // (d, 3d), columns ordered q | k | v, head-major within each
    Vec b_qkv;      // (3d)
    Mat w_attn_out; // (d, d)
    Vec b_attn_out; // (d)
    Mat w_fc;       // (d, 4d)
    Vec b_fc;       // (4d)
    Mat w_mlp_out;  // (4d, d)
    Vec b_mlp_out;  // (d)
};

/// Full parameter set. The unembedding is tied: column u_t of W_U is row t
/// of wte, so lens projections are computed against wte directly.
struct ModelWeights {
    ModelConfig cfg;
    Mat wte;  // (V, d)
    Mat wpe;  // (ctx, d)
    std::vector<BlockWeights> blocks;
    Vec lnf_g, lnf_b;

    /// Unembedding column for one token, as a row vector of length d.
    Vec unembed_col(int token_id) const {
        if (token_id < 0 || token_id >= wte.rows())
            fail("token id out of range for unembedding: " + std::to_string(token_id));
        return wte.row(token_id);
    }
};

/// Cache directory holding model subdirectories, resolved from
/// $ANCHORSCOPE_CACHE with ~/.cache/anchorscope as the fallback.
inline std::filesystem::path cache_root() {
    if (const char* env = std::getenv("ANCHORSCOPE_CACHE")) return env;
    if (const char* home = std::getenv("HOME"))
        return std::filesystem::path(home) / ".cache" / "anchorscope";
    return std::filesystem::path(".cache") / "anchorscope";
}

inline std::filesystem::path model_dir(const std::string& name) { return cache_root() / name; }

namespace detail {

inline Mat expect_matrix(SafeTensorsStream& st, const std::string& name, std::int64_t r,
                         std::int64_t c) {
    Mat m = st.read_matrix(name);
    if (m.rows() != r || m.cols() != c)
        fail("tensor \"" + name + "\" has shape [" + std::to_string(m.rows()) + ", " +
             std::to_string(m.cols()) + "], expected [" + std::to_string(r) + ", " +
             std::to_string(c) + "]");
    if (!m.allFinite()) fail("tensor \"" + name + "\" contains non-finite values");
    return m;
}

inline Vec expect_vector(SafeTensorsStream& st, const std::string& name, std::int64_t n) {
    Vec v = st.read_vector(name);
    if (v.size() != n)
        fail("tensor \"" + name + "\" has length " + std::to_string(v.size()) + ", expected " +
             std::to_string(n));
    if (!v.allFinite()) fail("tensor \"" + name + "\" contains non-finite values");
    return v;
}

} // namespace detail

/// Load a checkpoint in the Hugging Face GPT-2 safetensors layout. Every
/// expected tensor is shape-checked and scanned for non-finite values; the
/// per-layer "h.N.attn.bias" causal-mask buffers are ignored.
inline ModelWeights load_weights(const ModelConfig& cfg, const std::string& safetensors_path) {
    auto st = SafeTensorsStream::open(safetensors_path);
    const std::int64_t d = cfg.d_model;

    ModelWeights w;
    w.cfg = cfg;
    w.wte = detail::expect_matrix(st, "wte.weight", cfg.n_vocab, d);
    w.wpe = detail::expect_matrix(st, "wpe.weight", cfg.n_ctx, d);
    w.blocks.resize(static_cast<std::size_t>(cfg.n_layer));
    for (int l = 0; l < cfg.n_layer; ++l) {
        const std::string p = "h." + std::to_string(l) + ".";
        BlockWeights& b = w.blocks[static_cast<std::size_t>(l)];
        b.ln1_g = detail::expect_vector(st, p + "ln_1.weight", d);
        b.ln1_b = detail::expect_vector(st, p + "ln_1.bias", d);
        b.w_qkv = detail::expect_matrix(st, p + "attn.c_attn.weight", d, 3 * d);
        b.b_qkv = detail::expect_vector(st, p + "attn.c_attn.bias", 3 * d);
        b.w_attn_out = detail::expect_matrix(st, p + "attn.c_proj.weight", d, d);
        b.b_attn_out = detail::expect_vector(st, p + "attn.c_proj.bias", d);
        b.ln2_g = detail::expect_vector(st, p + "ln_2.weight", d);
        b.ln2_b = detail::expect_vector(st, p + "ln_2.bias", d);
        b.w_fc = detail::expect_matrix(st, p + "mlp.c_fc.weight", d, 4 * d);
        b.b_fc = detail::expect_vector(st, p + "mlp.c_fc.bias", 4 * d);
        b.w_mlp_out = detail::expect_matrix(st, p + "mlp.c_proj.weight", 4 * d, d);
        b.b_mlp_out = detail::expect_vector(st, p + "mlp.c_proj.bias", d);
    }
    w.lnf_g = detail::expect_vector(st, "ln_f.weight", d);
    w.lnf_b = detail::expect_vector(st, "ln_f.bias", d);
    return w;
}

/// Load by model name from the cache directory, cross-checking the preset
/// against the checkpoint's config.json when one is present.
inline ModelWeights load_model(const std::string& name) {
    const ModelConfig cfg = ModelConfig::preset(name);
    const auto dir = model_dir(name);
    const auto ckpt = dir / "model.safetensors";
    if (!std::filesystem::exists(ckpt))
        fail("checkpoint not found: " + ckpt.string() + " (run the fetch command first)");

    const auto cfg_path = dir / "config.json";
    if (std::filesystem::exists(cfg_path)) {
        std::ifstream f(cfg_path);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const std::exception& e) {
            fail("failed to parse " + cfg_path.string() + ": " + e.what());
        }
        auto check = [&](const char* key, int want) {
            if (j.contains(key) && j[key].get<int>() != want)
                fail("config.json " + std::string(key) + "=" + std::to_string(j[key].get<int>()) +
                     " disagrees with preset " + name + " (" + std::to_string(want) + ")");
        };
        check("n_layer", cfg.n_layer);
        check("n_head", cfg.n_head);
        check("n_embd", cfg.d_model);
    }
    return load_weights(cfg, ckpt.string());
}

} // namespace anchorscope
