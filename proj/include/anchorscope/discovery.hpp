#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "datasets.hpp"
#include "forward.hpp"
#include "lens.hpp"

namespace anchorscope {

/// Domain of the argmax that decides the predicted letter. `letters` restricts
/// to the sample's candidate letter tokens; `vocab` takes the global argmax
/// and maps it back to a letter when it happens to be one.
enum class ArgmaxDomain { letters, vocab };

inline ArgmaxDomain argmax_domain_from_string(const std::string& s) {
    if (s == "letters") return ArgmaxDomain::letters;
    if (s == "vocab") return ArgmaxDomain::vocab;
    fail("unknown argmax domain: " + s + " (expected letters or vocab)");
}

/// A rendered and tokenized MCQ, decoupled from any tokenizer so toy models
/// can feed the same scan machinery with hand-built id sequences.
struct PreparedSample {
    std::vector<int> ids;
    std::vector<int> letter_ids; // " A".." E" token ids, one per choice
    std::vector<int> letter_pos; // marker positions inside `ids`
    int gold = -1;               // 0-based choice index; -1 when stripped
    std::string tag;
};

namespace discovery {

inline std::vector<int> letter_ids_for(const Vocab& vocab, int arity) {
    std::vector<int> out;
    for (int c = 0; c < arity; ++c)
        out.push_back(vocab.letter_token_id(static_cast<char>('A' + c), true));
    return out;
}

/// Tokenize one sample, optionally behind k-shot exemplars. A leading
/// end-of-text token marks the document start the model was trained on;
/// per-layer readings shift without it, so it is on by default. Exemplars
/// render as the same template followed by the gold letter; the space before
/// the next "Question" keeps pre-tokenization boundaries stable, so the eval
/// block's ids (and marker positions) are independent of the prefix.
inline PreparedSample prepare(const Vocab& vocab, const Sample& s,
                              const std::vector<Sample>& exemplars = {},
                              bool prepend_bos = true) {
    const int arity = static_cast<int>(s.choices.size());
    PreparedSample p;
    p.tag = s.tag;
    p.gold = s.gold;
    p.letter_ids = letter_ids_for(vocab, arity);

    int offset = 0;
    if (prepend_bos) {
        if (vocab.end_of_text_id() < 0) fail("prepare: vocab has no end-of-text token");
        p.ids.push_back(vocab.end_of_text_id());
        offset = 1;
    }
    std::string body = datasets::render_prompt(s);
    if (!exemplars.empty()) {
        std::string prefix;
        for (std::size_t i = 0; i < exemplars.size(); ++i) {
            if (i) prefix += " ";
            prefix += datasets::render_prompt(exemplars[i]) + " " +
                      datasets::letter_of(exemplars[i].gold);
        }
        const auto prefix_ids = vocab.encode(prefix);
        p.ids.insert(p.ids.end(), prefix_ids.begin(), prefix_ids.end());
        offset += static_cast<int>(prefix_ids.size());
        body = " " + body;
    }
    const auto body_ids = vocab.encode(body);
    p.ids.insert(p.ids.end(), body_ids.begin(), body_ids.end());

    const auto pos = datasets::letter_positions(vocab, body_ids, arity);
    for (int t : pos) p.letter_pos.push_back(t + offset);
    return p;
}

/// Predicted letter index for a logit vector, or -1 for "other" (full-vocab
/// domain whose argmax is not a letter token). Ties resolve to the smallest
/// token id.
inline int classify_logits(const Vec& logits, const std::vector<int>& letter_ids,
                           ArgmaxDomain domain) {
    if (letter_ids.empty()) fail("classify_logits needs at least one letter id");
    if (domain == ArgmaxDomain::vocab) {
        const int top = argmax(logits);
        for (std::size_t c = 0; c < letter_ids.size(); ++c)
            if (letter_ids[c] == top) return static_cast<int>(c);
        return -1;
    }
    int best = 0;
    for (std::size_t c = 1; c < letter_ids.size(); ++c) {
        const float lc = logits[letter_ids[c]];
        const float lb = logits[letter_ids[static_cast<std::size_t>(best)]];
        if (lc > lb || (lc == lb && letter_ids[c] < letter_ids[static_cast<std::size_t>(best)]))
            best = static_cast<int>(c);
    }
    return best;
}

inline bool is_anchored(int predicted, int gold) { return predicted == 0 && gold != 0; }

struct MlpLayerDiff {
    int layer = 0;
    double mean_diff = 0.0;
    int count = 0;
};

struct HeadDiff {
    int layer = 0;
    int head = 0;
    double mean_diff = 0.0;
};

/// One per-sample candidate dimension: Contrib = |k_T^{l,n}| * ||v^{l,n}||
/// and the lens logit difference of the weighted value k * v.
struct LocusCandidate {
    int layer = 0;
    int dim = 0;
    float contrib = 0.0f;
    float diff = 0.0f;
};

struct ValueVectorLocus {
    int layer = 0;
    int dim = 0;
    double mean_contrib = 0.0; // over samples where the dim ranked top-k
    double mean_diff = 0.0;
    double frequency = 0.0; // % of samples where diff exceeded the threshold
    int selected = 0;
    int samples = 0;
};

struct ScanConfig {
    SigmaKind sigma = SigmaKind::learned;
    ArgmaxDomain domain = ArgmaxDomain::letters;
    double threshold = 4.0;
    int top_k_dims = 10;
    int threads = 0;
};

struct DatasetScan {
    std::string dataset;
    double threshold = 4.0;
    int total = 0;    // samples examined
    int anchored = 0; // predicted A with gold != A
    std::vector<MlpLayerDiff> mlp;
    std::vector<HeadDiff> heads;
    std::vector<int> flagged_layers; // mean diff > threshold
    std::vector<ValueVectorLocus> loci;

    double anchored_rate() const {
        return total ? 100.0 * anchored / total : 0.0;
    }
};

/// Top-k dimensions of one layer by Contrib, ties toward smaller dim. `diff`
/// is the lens difference of the weighted value between tok_a and tok_b.
inline std::vector<LocusCandidate> dominant_dimensions(const ModelWeights& w,
                                                       const ActivationTrace& tr, const Lens& lens,
                                                       int layer, int tok_a, int tok_b,
                                                       int k = 10) {
    if (tr.level == Capture::none) fail("dominant_dimensions needs a captured trace");
    if (layer < 0 || layer >= w.cfg.n_layer)
        fail("layer out of range: " + std::to_string(layer));
    const Vec& coeff = tr.layers[static_cast<std::size_t>(layer)].mlp_coeff;
    const Mat& w_out = w.blocks[static_cast<std::size_t>(layer)].w_mlp_out;
    const int dm = static_cast<int>(coeff.size());
    if (k < 1 || k > dm) fail("dominant_dimensions k out of range");

    std::vector<int> dims(static_cast<std::size_t>(dm));
    for (int n = 0; n < dm; ++n) dims[static_cast<std::size_t>(n)] = n;
    Vec contrib(dm);
    for (int n = 0; n < dm; ++n) contrib[n] = std::abs(coeff[n]) * w_out.row(n).norm();
    std::partial_sort(dims.begin(), dims.begin() + k, dims.end(), [&](int a, int b) {
        if (contrib[a] != contrib[b]) return contrib[a] > contrib[b];
        return a < b;
    });

    std::vector<LocusCandidate> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const int n = dims[static_cast<std::size_t>(i)];
        LocusCandidate c;
        c.layer = layer;
        c.dim = n;
        c.contrib = contrib[n];
        const Vec wv = coeff[n] * w_out.row(n);
        const Vec s = lens.sigma(wv);
        c.diff = lens.logit_from_sigma(s, tok_a) - lens.logit_from_sigma(s, tok_b);
        out.push_back(c);
    }
    return out;
}

/// Aggregate per-sample candidates into loci. A locus is kept when its diff
/// exceeds the threshold in at least one sample; frequency is the share of
/// all samples where that happened. Sort: frequency desc, layer, dim.
inline std::vector<ValueVectorLocus> select_bias_vectors(
    const std::vector<std::vector<LocusCandidate>>& per_sample, double threshold) {
    struct Acc {
        int appeared = 0;
        int selected = 0;
        double contrib = 0.0;
        double diff = 0.0;
    };
    std::map<std::pair<int, int>, Acc> acc;
    for (const auto& cands : per_sample) {
        for (const auto& c : cands) {
            auto& a = acc[{c.layer, c.dim}];
            ++a.appeared;
            a.contrib += c.contrib;
            a.diff += c.diff;
            if (c.diff > threshold) ++a.selected;
        }
    }
    const int n = static_cast<int>(per_sample.size());
    std::vector<ValueVectorLocus> out;
    for (const auto& [key, a] : acc) {
        if (a.selected == 0) continue;
        ValueVectorLocus v;
        v.layer = key.first;
        v.dim = key.second;
        v.mean_contrib = a.contrib / a.appeared;
        v.mean_diff = a.diff / a.appeared;
        v.selected = a.selected;
        v.samples = n;
        v.frequency = n ? 100.0 * a.selected / n : 0.0;
        out.push_back(v);
    }
    std::sort(out.begin(), out.end(), [](const ValueVectorLocus& a, const ValueVectorLocus& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.dim < b.dim;
    });
    return out;
}

namespace detail {

struct SampleScan {
    bool anchored = false;
    std::vector<double> mlp_diff;               // per layer
    std::vector<double> head_diff;              // layer-major, per (l,h)
    std::vector<LocusCandidate> candidates;     // top-k per layer
};

/// One instrumented pass worth of scan statistics for a single sample.
inline SampleScan scan_one(const ModelWeights& w, const PreparedSample& s, const Lens& lens,
                           const ScanConfig& cfg, bool assume_anchored) {
    if (s.gold < 0 || s.gold >= static_cast<int>(s.letter_ids.size()))
        fail("scan needs samples with a gold letter");
    const int L = w.cfg.n_layer;
    const int H = w.cfg.n_head;
    SampleScan out;
    const auto tr = forward(w, s.ids, Capture::final_position);
    const int tok_a = s.letter_ids[0];
    const int tok_c = s.letter_ids[static_cast<std::size_t>(s.gold)];
    out.anchored = assume_anchored ||
                   is_anchored(classify_logits(tr.logits, s.letter_ids, cfg.domain), s.gold);
    if (!out.anchored) return out;

    out.mlp_diff.resize(static_cast<std::size_t>(L));
    out.head_diff.resize(static_cast<std::size_t>(L * H));
    for (int l = 0; l < L; ++l) {
        const auto& lt = tr.layers[static_cast<std::size_t>(l)];
        const Vec sm = lens.sigma(lt.mlp_out);
        out.mlp_diff[static_cast<std::size_t>(l)] =
            lens.logit_from_sigma(sm, tok_a) - lens.logit_from_sigma(sm, tok_c);
        for (int h = 0; h < H; ++h) {
            const Vec sh = lens.sigma(Vec(lt.head_r.row(h)));
            out.head_diff[static_cast<std::size_t>(l * H + h)] =
                lens.logit_from_sigma(sh, tok_a) - lens.logit_from_sigma(sh, tok_c);
        }
        const auto cands = dominant_dimensions(w, tr, lens, l, tok_a, tok_c, cfg.top_k_dims);
        out.candidates.insert(out.candidates.end(), cands.begin(), cands.end());
    }
    return out;
}

inline DatasetScan reduce_scans(const std::vector<SampleScan>& scans, const ModelWeights& w,
                                const ScanConfig& cfg, const std::string& name) {
    const int L = w.cfg.n_layer;
    const int H = w.cfg.n_head;
    DatasetScan ds;
    ds.dataset = name;
    ds.threshold = cfg.threshold;
    ds.total = static_cast<int>(scans.size());

    std::vector<double> mlp_sum(static_cast<std::size_t>(L), 0.0);
    std::vector<double> head_sum(static_cast<std::size_t>(L * H), 0.0);
    std::vector<std::vector<LocusCandidate>> per_sample;
    for (const auto& sc : scans) {
        if (!sc.anchored) continue;
        ++ds.anchored;
        for (int l = 0; l < L; ++l) mlp_sum[static_cast<std::size_t>(l)] += sc.mlp_diff[static_cast<std::size_t>(l)];
        for (int i = 0; i < L * H; ++i) head_sum[static_cast<std::size_t>(i)] += sc.head_diff[static_cast<std::size_t>(i)];
        per_sample.push_back(sc.candidates);
    }
    if (ds.anchored == 0) return ds;

    for (int l = 0; l < L; ++l) {
        MlpLayerDiff m;
        m.layer = l;
        m.count = ds.anchored;
        m.mean_diff = mlp_sum[static_cast<std::size_t>(l)] / ds.anchored;
        ds.mlp.push_back(m);
        if (m.mean_diff > cfg.threshold) ds.flagged_layers.push_back(l);
    }
    for (int l = 0; l < L; ++l)
        for (int h = 0; h < H; ++h) {
            HeadDiff hd;
            hd.layer = l;
            hd.head = h;
            hd.mean_diff = head_sum[static_cast<std::size_t>(l * H + h)] / ds.anchored;
            ds.heads.push_back(hd);
        }

    // Locus selection runs on the layers the Eq. 6 scan flagged.
    for (auto& cands : per_sample) {
        std::vector<LocusCandidate> kept;
        for (const auto& c : cands)
            if (std::find(ds.flagged_layers.begin(), ds.flagged_layers.end(), c.layer) !=
                ds.flagged_layers.end())
                kept.push_back(c);
        cands = std::move(kept);
    }
    ds.loci = select_bias_vectors(per_sample, cfg.threshold);
    return ds;
}

inline DatasetScan scan_impl(const ModelWeights& w, const std::vector<PreparedSample>& samples,
                             const ScanConfig& cfg, const std::string& name,
                             bool assume_anchored) {
    if (samples.empty()) fail("scan over an empty sample list");
    const Lens lens(w, cfg.sigma);
    std::vector<SampleScan> scans(samples.size());
    parallel_for(samples.size(), cfg.threads, [&](std::size_t i) {
        scans[i] = scan_one(w, samples[i], lens, cfg, assume_anchored);
    });
    return reduce_scans(scans, w, cfg, name);
}

} // namespace detail

/// Classify every sample and scan the anchored subset in one pass each.
inline DatasetScan scan_dataset(const ModelWeights& w, const std::vector<PreparedSample>& samples,
                                const ScanConfig& cfg = {}, const std::string& name = "dataset") {
    return detail::scan_impl(w, samples, cfg, name, false);
}

/// Eq. 6 layer scan over a pre-filtered anchored subset.
inline std::vector<MlpLayerDiff> mlp_layer_scan(const ModelWeights& w,
                                                const std::vector<PreparedSample>& anchored,
                                                const ScanConfig& cfg = {}) {
    auto ds = detail::scan_impl(w, anchored, cfg, "anchored", true);
    return std::move(ds.mlp);
}

/// Per-head mean lens difference over a pre-filtered anchored subset.
inline std::vector<HeadDiff> head_scan(const ModelWeights& w,
                                       const std::vector<PreparedSample>& anchored,
                                       const ScanConfig& cfg = {}) {
    auto ds = detail::scan_impl(w, anchored, cfg, "anchored", true);
    return std::move(ds.heads);
}

/// Heads sorted by descending mean diff (ties by layer then head index).
inline std::vector<HeadDiff> top_heads(std::vector<HeadDiff> heads, int k) {
    std::sort(heads.begin(), heads.end(), [](const HeadDiff& a, const HeadDiff& b) {
        if (a.mean_diff != b.mean_diff) return a.mean_diff > b.mean_diff;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.head < b.head;
    });
    if (k < static_cast<int>(heads.size())) heads.resize(static_cast<std::size_t>(k));
    return heads;
}

inline float attention_weight_at(const ActivationTrace& tr, int layer, int head, int query_pos,
                                 int key_pos) {
    if (tr.level != Capture::full) fail("attention_weight_at needs a full capture");
    const int T = static_cast<int>(tr.ids.size());
    if (layer < 0 || layer >= static_cast<int>(tr.layers.size()))
        fail("layer out of range: " + std::to_string(layer));
    const auto& pats = tr.layers[static_cast<std::size_t>(layer)].patterns;
    if (head < 0 || head >= static_cast<int>(pats.size()))
        fail("head out of range: " + std::to_string(head));
    if (query_pos < 0 || query_pos >= T || key_pos < 0 || key_pos >= T)
        fail("attention position out of range");
    return pats[static_cast<std::size_t>(head)](query_pos, key_pos);
}

struct CircuitNode {
    bool is_head = false;
    int layer = 0;
    int head = -1;
    double score = 0.0;       // mean diff over the datasets that flagged it
    double probability = 0.0; // % of datasets where the node exceeds threshold
};

struct BiasCircuit {
    double threshold = 4.0;
    int dataset_count = 0;
    std::vector<CircuitNode> nodes;
};

/// Union of per-dataset threshold exceedances; per-node probability is the
/// fraction of datasets that flagged the node.
inline BiasCircuit build_circuit(const std::vector<DatasetScan>& scans, double threshold = 4.0) {
    BiasCircuit c;
    c.threshold = threshold;
    c.dataset_count = static_cast<int>(scans.size());
    std::map<std::pair<int, int>, std::pair<int, double>> acc; // (layer, head|-1) -> (hits, sum)
    for (const auto& ds : scans) {
        for (const auto& m : ds.mlp)
            if (m.mean_diff > threshold) {
                auto& a = acc[{m.layer, -1}];
                ++a.first;
                a.second += m.mean_diff;
            }
        for (const auto& h : ds.heads)
            if (h.mean_diff > threshold) {
                auto& a = acc[{h.layer, h.head}];
                ++a.first;
                a.second += h.mean_diff;
            }
    }
    for (const auto& [key, a] : acc) {
        CircuitNode n;
        n.layer = key.first;
        n.head = key.second;
        n.is_head = key.second >= 0;
        n.score = a.second / a.first;
        n.probability = c.dataset_count ? 100.0 * a.first / c.dataset_count : 0.0;
        c.nodes.push_back(n);
    }
    return c;
}

struct AdditivityReport {
    double full_diff = 0.0;  // lens diff of the final residual
    double parts_sum = 0.0;  // embed + heads + buckets + MLPs + LN bias
    double embed_term = 0.0;
    double bias_terms = 0.0; // attention bias buckets plus the LN beta term
    std::vector<double> mlp_terms;
    std::vector<double> head_terms; // layer-major (l, h)

    double gap() const { return std::abs(full_diff - parts_sum); }
};

/// Frozen-sigma decomposition diagnostic: center each residual component,
/// divide by the full residual's LN denominator, and apply gain once, so the
/// per-component lens terms sum exactly to the final logit difference. The
/// reported scans use the literal per-component sigma instead; this check
/// only certifies that the decomposition covers the stream.
inline AdditivityReport additivity_check(const ModelWeights& w, const ActivationTrace& tr,
                                         int tok_a, int tok_b) {
    if (tr.level == Capture::none) fail("additivity_check needs a captured trace");
    const int L = w.cfg.n_layer;
    const int H = w.cfg.n_head;
    const int d = w.cfg.d_model;
    const Vec& resid = tr.layers[static_cast<std::size_t>(L - 1)].resid;
    const float mu = resid.mean();
    float var = 0.0f;
    for (int i = 0; i < d; ++i) var += (resid[i] - mu) * (resid[i] - mu);
    const float denom = std::sqrt(var / static_cast<float>(d) + kLnEps);

    const Vec dir = w.wte.row(tok_a) - w.wte.row(tok_b);
    auto term = [&](const Vec& comp) {
        const Vec z = (((comp.array() - comp.mean()) / denom) * w.lnf_g.array()).matrix();
        return static_cast<double>(z.dot(dir));
    };

    AdditivityReport rep;
    rep.embed_term = term(tr.x0);
    rep.parts_sum = rep.embed_term;
    rep.bias_terms = static_cast<double>(w.lnf_b.dot(dir));
    for (int l = 0; l < L; ++l) {
        const auto& lt = tr.layers[static_cast<std::size_t>(l)];
        for (int h = 0; h < H; ++h) {
            const double t = term(Vec(lt.head_r.row(h)));
            rep.head_terms.push_back(t);
            rep.parts_sum += t;
        }
        const double bucket = term(attn_bias_bucket(w.blocks[static_cast<std::size_t>(l)]));
        rep.bias_terms += bucket;
        rep.parts_sum += bucket;
        const double m = term(lt.mlp_out);
        rep.mlp_terms.push_back(m);
        rep.parts_sum += m;
    }
    rep.parts_sum += static_cast<double>(w.lnf_b.dot(dir));

    const Vec sfull = layer_norm(resid, w.lnf_g, w.lnf_b);
    rep.full_diff = static_cast<double>(sfull.dot(dir));
    return rep;
}

} // namespace discovery
} // namespace anchorscope
