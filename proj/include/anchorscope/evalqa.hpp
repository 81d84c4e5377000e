#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mitigation.hpp"

namespace anchorscope {
namespace evalqa {

inline constexpr int kResultSchemaVersion = 1;

struct EvalResult {
    std::string dataset;
    std::string model;
    std::string condition = "baseline";
    std::string split = "all";
    double anchored_rate = 0.0; // % predicting A where gold != A
    double accuracy = 0.0;      // % predicting gold
    double other_rate = 0.0;    // % remaining
    int count = 0;
};

/// Builds the per-sample plan. The sample arrives exactly as classify will
/// see it (gold stripped for Eva.); baseline logits come from an unedited
/// pass so gold-free target rules can rank letters.
using PlanBuilder =
    std::function<mitigation::EditPlan(const PreparedSample&, const Vec& baseline_logits)>;

/// Predicted letter for one sample under an optional plan.
inline int classify(const ModelWeights& w, const PreparedSample& s,
                    const mitigation::EditPlan* plan = nullptr,
                    ArgmaxDomain domain = ArgmaxDomain::letters) {
    if (plan && !plan->empty()) {
        const ForwardHooks hooks = mitigation::to_hooks(w, *plan);
        return discovery::classify_logits(next_token_logits(w, s.ids, &hooks), s.letter_ids,
                                          domain);
    }
    return discovery::classify_logits(next_token_logits(w, s.ids), s.letter_ids, domain);
}

namespace detail {

struct Tally {
    int anchored = 0;
    int correct = 0;
    int other = 0;
    int total = 0;
};

inline EvalResult to_result(const Tally& t) {
    EvalResult r;
    r.count = t.total;
    if (t.total) {
        r.anchored_rate = 100.0 * t.anchored / t.total;
        r.accuracy = 100.0 * t.correct / t.total;
        r.other_rate = 100.0 * t.other / t.total;
    }
    return r;
}

} // namespace detail

/// Accuracy (and anchored/other rates) over samples, with per-sample plans
/// built by `builder`. A null builder evaluates the unedited model in one
/// pass per sample; otherwise a baseline pass feeds the builder first.
inline EvalResult accuracy(const ModelWeights& w, const std::vector<PreparedSample>& samples,
                           const PlanBuilder& builder = nullptr,
                           ArgmaxDomain domain = ArgmaxDomain::letters, int threads = 0) {
    if (samples.empty()) fail("accuracy over an empty sample list");
    struct Row {
        int predicted = -1;
        int gold = -1;
    };
    std::vector<Row> rows(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        const PreparedSample& s = samples[i];
        if (s.gold < 0) fail("accuracy needs samples with gold labels");
        if (builder) {
            const Vec baseline = next_token_logits(w, s.ids);
            PreparedSample view = s;
            const mitigation::EditPlan plan = builder(view, baseline);
            rows[i].predicted = classify(w, s, &plan, domain);
        } else {
            rows[i].predicted = classify(w, s, nullptr, domain);
        }
        rows[i].gold = s.gold;
    });
    detail::Tally t;
    for (const auto& r : rows) {
        ++t.total;
        if (r.predicted == r.gold)
            ++t.correct;
        else if (r.predicted == 0)
            ++t.anchored;
        else
            ++t.other;
    }
    return detail::to_result(t);
}

/// Share of samples predicting " A". pre: every gold letter != A.
inline double anchored_rate(const ModelWeights& w, const std::vector<PreparedSample>& samples,
                            ArgmaxDomain domain = ArgmaxDomain::letters, int threads = 0) {
    if (samples.empty()) fail("anchored_rate over an empty sample list");
    for (const auto& s : samples)
        if (s.gold == 0) fail("anchored_rate expects gold != A for every sample");
    return accuracy(w, samples, nullptr, domain, threads).anchored_rate;
}

/// Gold-target plan builder over fixed loci (Infer. setting).
inline PlanBuilder gold_plan_builder(std::vector<discovery::ValueVectorLocus> loci,
                                     float lambda1 = 1.0f, float lambda2 = 8.0f) {
    return [loci = std::move(loci), lambda1, lambda2](const PreparedSample& s, const Vec&) {
        return mitigation::plan_edits_gold(s, loci, lambda1, lambda2);
    };
}

/// Gold-free plan builder (Eva. setting): the gold field is stripped before
/// the plan sees the sample, so the target can only come from baseline
/// logits.
inline PlanBuilder gold_free_plan_builder(std::vector<discovery::ValueVectorLocus> loci,
                                          float lambda1 = 1.0f, float lambda2 = 8.0f) {
    return [loci = std::move(loci), lambda1, lambda2](const PreparedSample& s,
                                                      const Vec& baseline) {
        PreparedSample stripped = s;
        stripped.gold = -1;
        return mitigation::plan_edits_gold_free(stripped, baseline, loci, lambda1, lambda2);
    };
}

/// Swap plan builders mirroring the two target rules.
inline PlanBuilder swap_plan_builder(int layer, int head, bool literal = false) {
    return [layer, head, literal](const PreparedSample& s, const Vec&) {
        auto plan = mitigation::plan_attention_swap(s, layer, head, s.gold);
        plan.swap_literal = literal;
        return plan;
    };
}

inline PlanBuilder swap_plan_builder_gold_free(int layer, int head, bool literal = false) {
    return [layer, head, literal](const PreparedSample& s, const Vec& baseline) {
        PreparedSample stripped = s;
        stripped.gold = -1;
        auto plan = mitigation::plan_attention_swap(
            stripped, layer, head, mitigation::gold_free_target(stripped, baseline));
        plan.swap_literal = literal;
        return plan;
    };
}

/// One EvalResult per lambda2 value, gold-target plans.
inline std::vector<EvalResult> lambda_sweep(const ModelWeights& w,
                                            const std::vector<PreparedSample>& samples,
                                            const std::vector<discovery::ValueVectorLocus>& loci,
                                            const std::vector<float>& lambda2_values,
                                            float lambda1 = 1.0f,
                                            ArgmaxDomain domain = ArgmaxDomain::letters,
                                            int threads = 0) {
    if (loci.empty()) fail("lambda sweep needs at least one locus");
    std::vector<EvalResult> out;
    for (float l2 : lambda2_values) {
        EvalResult r = accuracy(w, samples, gold_plan_builder(loci, lambda1, l2), domain, threads);
        r.condition = "edit lambda2=" + format_fixed(l2, 1);
        out.push_back(std::move(r));
    }
    return out;
}

enum class DamageTask { original_ioi, original_greater };

struct DamageResult {
    double accuracy = 0.0; // % of scored samples
    int scored = 0;
    int skipped = 0; // answer tokens that did not map to single tokens
    std::vector<std::string> warnings;
};

/// Raw prompt ids with the same leading end-of-text marker `prepare` uses,
/// so damage prompts see the model under identical conditioning.
inline std::vector<int> prompt_ids(const Vocab& vocab, const std::string& text) {
    std::vector<int> ids;
    if (vocab.end_of_text_id() >= 0) ids.push_back(vocab.end_of_text_id());
    const auto body = vocab.encode(text);
    ids.insert(ids.end(), body.begin(), body.end());
    return ids;
}

/// Accuracy on the original (non-MCQ) tasks; the MCQ `question` fields are
/// exactly the original prompts, so damage evaluation reuses the datasets.
/// IOI scores logit(correct name) > logit(distractor); Greater compares
/// probability mass on valid vs invalid two-digit continuations.
inline DamageResult damage_eval(const ModelWeights& w, const Vocab& vocab, const Dataset& data,
                                DamageTask task, int threads = 0,
                                const ForwardHooks* hooks = nullptr) {
    if (data.samples.empty()) fail("damage_eval over an empty dataset");

    if (task == DamageTask::original_ioi) {
        struct Row {
            int verdict = -1; // -1 skipped, 0 wrong, 1 correct
            std::string warning;
        };
        std::vector<Row> rows(data.samples.size());
        parallel_for(data.samples.size(), threads, [&](std::size_t i) {
            const Sample& s = data.samples[i];
            const auto correct = vocab.encode(" " + s.choices[static_cast<std::size_t>(s.gold)]);
            const auto wrong = vocab.encode(" " + s.choices[0]);
            if (correct.size() != 1 || wrong.size() != 1) {
                rows[i].warning = "skipping sample " + std::to_string(i) +
                                  ": name is not a single token";
                return;
            }
            const Vec logits = next_token_logits(w, prompt_ids(vocab, s.question), hooks);
            rows[i].verdict = logits[correct[0]] > logits[wrong[0]] ? 1 : 0;
        });
        DamageResult out;
        for (const auto& r : rows) {
            if (r.verdict < 0) {
                ++out.skipped;
                if (!r.warning.empty()) out.warnings.push_back(r.warning);
                continue;
            }
            ++out.scored;
            if (r.verdict == 1) out.accuracy += 1.0;
        }
        if (out.scored == 0) fail("damage_eval: every IOI sample was skipped");
        out.accuracy = 100.0 * out.accuracy / out.scored;
        return out;
    }

    // Two-digit continuation tokens "00".."99"; entries that are not single
    // tokens fall out of both mass sums.
    std::vector<int> year_tokens(100, -1);
    int missing_years = 0;
    for (int v = 0; v < 100; ++v) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02d", v);
        const auto ids = vocab.encode(buf);
        if (ids.size() == 1)
            year_tokens[static_cast<std::size_t>(v)] = ids[0];
        else
            ++missing_years;
    }
    std::vector<int> verdicts(data.samples.size(), -1);
    parallel_for(data.samples.size(), threads, [&](std::size_t i) {
        const Sample& s = data.samples[i];
        const auto cut = s.question.find(" to the year 17");
        if (cut == std::string::npos || cut < 2 || s.question.back() != '7')
            fail("sample is not an original-Greater prompt: " + s.question);
        const int xx = std::stoi(s.question.substr(cut - 2, 2));
        const Vec logits = next_token_logits(w, prompt_ids(vocab, s.question), hooks);
        std::vector<int> at;
        for (int t : year_tokens)
            if (t >= 0) at.push_back(t);
        const auto probs = softmax_probs_at(logits, at);
        double valid = 0.0, invalid = 0.0;
        std::size_t j = 0;
        for (int v = 0; v < 100; ++v) {
            if (year_tokens[static_cast<std::size_t>(v)] < 0) continue;
            (v > xx ? valid : invalid) += probs[j];
            ++j;
        }
        verdicts[i] = valid > invalid ? 1 : 0;
    });
    DamageResult out;
    if (missing_years)
        out.warnings.push_back("skipping " + std::to_string(missing_years) +
                               " two-digit years that are not single tokens");
    for (int v : verdicts) {
        ++out.scored;
        if (v == 1) out.accuracy += 1.0;
    }
    out.accuracy = 100.0 * out.accuracy / out.scored;
    return out;
}

/// k-shot accuracy with seeded round-robin exemplars. The pool must not
/// overlap the eval samples; exemplars may keep gold = A (the anchored-bias
/// filter applies to eval samples only).
inline EvalResult few_shot_eval(const ModelWeights& w, const Vocab& vocab,
                                const std::vector<Sample>& samples,
                                const std::vector<Sample>& exemplar_pool, int k,
                                std::uint64_t seed, ArgmaxDomain domain = ArgmaxDomain::letters,
                                int threads = 0) {
    if (k < 0 || k > 2) fail("few-shot k must be 0, 1, or 2");
    if (samples.empty()) fail("few_shot_eval over an empty sample list");
    if (k > 0 && static_cast<int>(exemplar_pool.size()) < k)
        fail("exemplar pool smaller than k");
    std::vector<std::size_t> order(exemplar_pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<PreparedSample> prepared(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        std::vector<Sample> exemplars;
        for (int j = 0; j < k; ++j) {
            const std::size_t pick = order[(i * static_cast<std::size_t>(k) +
                                            static_cast<std::size_t>(j)) %
                                           order.size()];
            exemplars.push_back(exemplar_pool[pick]);
        }
        prepared[i] = discovery::prepare(vocab, samples[i], exemplars);
    });
    EvalResult r = accuracy(w, prepared, nullptr, domain, threads);
    r.condition = std::to_string(k) + "-shot";
    return r;
}

} // namespace evalqa
} // namespace anchorscope
