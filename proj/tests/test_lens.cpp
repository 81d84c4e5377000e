#include <catch2/catch_amalgamated.hpp>

#include <anchorscope/forward.hpp>
#include <anchorscope/lens.hpp>

#include "helpers.hpp"

using anchorscope::Lens;
using anchorscope::ModelWeights;
using anchorscope::SigmaKind;
using anchorscope::Vec;

namespace {

Vec random_vec(int n, std::uint64_t seed) {
    anchorscope::Rng rng(seed);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

} // namespace

TEST_CASE("learned sigma is the final layer norm", "[lens]") {
    const auto cfg = testutil::tiny_config();
    const ModelWeights w = testutil::random_weights(cfg, 51);
    const Vec v = random_vec(cfg.d_model, 7);

    const Lens lens(w, SigmaKind::learned);
    const Vec s = lens.sigma(v);
    const Vec ref = anchorscope::layer_norm(v, w.lnf_g, w.lnf_b);
    REQUIRE((s - ref).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("plain sigma centers and scales without affine parameters", "[lens]") {
    const auto cfg = testutil::tiny_config();
    const ModelWeights w = testutil::random_weights(cfg, 52);
    const Vec v = random_vec(cfg.d_model, 8);

    const Lens lens(w, SigmaKind::plain);
    const Vec s = lens.sigma(v);
    REQUIRE(s.mean() == Catch::Approx(0.0).margin(1e-6));
    REQUIRE(s.squaredNorm() / cfg.d_model == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("project is the unembedding of sigma", "[lens]") {
    const auto cfg = testutil::tiny_config();
    const ModelWeights w = testutil::random_weights(cfg, 53);
    const Vec v = random_vec(cfg.d_model, 9);

    const Lens lens(w);
    const Vec logits = lens.project(v);
    REQUIRE(logits.size() == cfg.n_vocab);
    const Vec s = lens.sigma(v);
    for (int t = 0; t < cfg.n_vocab; ++t) {
        REQUIRE(logits[t] == Catch::Approx(w.wte.row(t).dot(s)).margin(1e-4));
        REQUIRE(lens.logit(v, t) == Catch::Approx(logits[t]).margin(1e-5));
        REQUIRE(lens.logit_from_sigma(s, t) == lens.logit(v, t));
    }
}

TEST_CASE("top_k orders by logit with ties toward smaller ids", "[lens]") {
    const auto cfg = testutil::tiny_config();
    ModelWeights w = testutil::random_weights(cfg, 54);
    w.wte.row(9) = w.wte.row(3); // force an exact tie
    const Vec v = random_vec(cfg.d_model, 10);

    const Lens lens(w);
    const auto top = lens.top_k(v, cfg.n_vocab);
    REQUIRE(static_cast<int>(top.size()) == cfg.n_vocab);
    for (std::size_t i = 1; i < top.size(); ++i) {
        REQUIRE(top[i - 1].second >= top[i].second);
        if (top[i - 1].second == top[i].second) REQUIRE(top[i - 1].first < top[i].first);
    }
    int pos3 = -1, pos9 = -1;
    for (std::size_t i = 0; i < top.size(); ++i) {
        if (top[i].first == 3) pos3 = static_cast<int>(i);
        if (top[i].first == 9) pos9 = static_cast<int>(i);
    }
    REQUIRE(pos3 + 1 == pos9);

    REQUIRE(lens.top_k(v, 0).empty());
    REQUIRE(lens.top_k(v, cfg.n_vocab + 5).size() == static_cast<std::size_t>(cfg.n_vocab));
}

TEST_CASE("learned lens of the final residual reproduces model logits", "[lens][model]") {
    REQUIRE_MODEL("gpt2");
    const ModelWeights& w = testutil::gpt2();
    const auto& vocab = testutil::gpt2_vocab();
    const auto ids = vocab.encode("The capital of France is");
    const auto tr = anchorscope::forward(w, ids, anchorscope::Capture::final_position);

    const Lens lens(w, SigmaKind::learned);
    const Vec projected = lens.project(tr.layers.back().resid);
    REQUIRE((projected - tr.logits).cwiseAbs().maxCoeff() < 1e-3f);
    const auto top = lens.top_k(tr.layers.back().resid, 1);
    REQUIRE(top[0].first == anchorscope::argmax(tr.logits));
}

TEST_CASE("plain and learned sigma rank mid-stream vectors differently", "[lens][model]") {
    REQUIRE_MODEL("gpt2");
    const ModelWeights& w = testutil::gpt2();
    const Vec v = Vec(w.blocks[9].w_mlp_out.row(1853));

    const Lens learned(w, SigmaKind::learned);
    const Lens plain(w, SigmaKind::plain);
    const auto a = learned.top_k(v, 10);
    const auto b = plain.top_k(v, 10);
    REQUIRE(a.size() == 10);
    REQUIRE(b.size() == 10);
    // both readings are valid sigma variants; they need not agree entry-wise
    REQUIRE(a[0].second != b[0].second);
}
