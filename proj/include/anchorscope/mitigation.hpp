#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "discovery.hpp"

namespace anchorscope {
namespace mitigation {

inline constexpr int kPlanSchemaVersion = 1;

/// Eq. 8 instance: v' = v - lambda1 * u_anchor + lambda2 * u_target.
struct VectorEdit {
    int layer = 0;
    int dim = 0;
    float lambda1 = 1.0f;
    float lambda2 = 8.0f;
    int anchor_id = 0;
    int target_id = 0;
};

/// Eq. 9 instance, realized as an attention-pattern swap at the final query
/// position (see ForwardHooks::swap_literal for the audit realization).
struct AttentionSwap {
    int layer = 0;
    int head = 0;
    int pos_a = 0;    // position of the " A" letter token
    int pos_corr = 0; // position of the designated letter token
};

struct EditPlan {
    std::vector<VectorEdit> edits;
    std::vector<AttentionSwap> swaps;
    bool swap_literal = false;

    bool empty() const { return edits.empty() && swaps.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = kPlanSchemaVersion;
        j["edits"] = nlohmann::json::array();
        for (const auto& e : edits)
            j["edits"].push_back({{"layer", e.layer},
                                  {"dim", e.dim},
                                  {"lambda1", e.lambda1},
                                  {"lambda2", e.lambda2},
                                  {"anchor_id", e.anchor_id},
                                  {"target_id", e.target_id}});
        j["swaps"] = nlohmann::json::array();
        for (const auto& s : swaps)
            j["swaps"].push_back({{"layer", s.layer},
                                  {"head", s.head},
                                  {"pos_a", s.pos_a},
                                  {"pos_corr", s.pos_corr}});
        j["swap_literal"] = swap_literal;
        return j;
    }

    static EditPlan from_json(const nlohmann::json& j) {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kPlanSchemaVersion)
            fail("edit plan schema version mismatch (expected " +
                 std::to_string(kPlanSchemaVersion) + ")");
        EditPlan p;
        for (const auto& e : j.at("edits")) {
            VectorEdit v;
            v.layer = e.at("layer").get<int>();
            v.dim = e.at("dim").get<int>();
            v.lambda1 = e.at("lambda1").get<float>();
            v.lambda2 = e.at("lambda2").get<float>();
            v.anchor_id = e.at("anchor_id").get<int>();
            v.target_id = e.at("target_id").get<int>();
            p.edits.push_back(v);
        }
        for (const auto& s : j.at("swaps")) {
            AttentionSwap a;
            a.layer = s.at("layer").get<int>();
            a.head = s.at("head").get<int>();
            a.pos_a = s.at("pos_a").get<int>();
            a.pos_corr = s.at("pos_corr").get<int>();
            p.swaps.push_back(a);
        }
        p.swap_literal = j.value("swap_literal", false);
        return p;
    }
};

inline void validate_edit(const ModelWeights& w, const VectorEdit& e) {
    if (e.layer < 0 || e.layer >= w.cfg.n_layer)
        fail("edit layer out of range: " + std::to_string(e.layer));
    if (e.dim < 0 || e.dim >= w.cfg.d_mlp())
        fail("edit dim out of range: " + std::to_string(e.dim));
    if (e.anchor_id < 0 || e.anchor_id >= w.cfg.n_vocab || e.target_id < 0 ||
        e.target_id >= w.cfg.n_vocab)
        fail("edit token id out of range");
    if (e.anchor_id == e.target_id) fail("edit anchor equals target; self-cancelling edit");
    if (e.lambda1 < 0.0f || e.lambda2 < 0.0f) fail("edit lambdas must be non-negative");
}

/// Residual-space delta the edit adds to the value vector.
inline Vec edit_delta(const ModelWeights& w, const VectorEdit& e) {
    validate_edit(w, e);
    return -e.lambda1 * w.wte.row(e.anchor_id) + e.lambda2 * w.wte.row(e.target_id);
}

/// Eq. 8 on a full weight copy. Costs a model copy, so it is meant for toy
/// and test use; evaluation loops patch per pass via to_hooks, and the
/// persistent CLI mode edits in place.
inline ModelWeights edit_value_vector(const ModelWeights& w, const VectorEdit& e) {
    const Vec delta = edit_delta(w, e);
    ModelWeights out = w;
    out.blocks[static_cast<std::size_t>(e.layer)].w_mlp_out.row(e.dim) += delta;
    return out;
}

/// In-place edit; returns the previous row so callers can restore it.
inline Vec apply_edit_inplace(ModelWeights& w, const VectorEdit& e) {
    const Vec delta = edit_delta(w, e);
    Mat& w_out = w.blocks[static_cast<std::size_t>(e.layer)].w_mlp_out;
    const Vec before = w_out.row(e.dim);
    w_out.row(e.dim) += delta;
    return before;
}

inline void restore_value_vector(ModelWeights& w, int layer, int dim, const Vec& row) {
    if (layer < 0 || layer >= w.cfg.n_layer) fail("restore layer out of range");
    Mat& w_out = w.blocks[static_cast<std::size_t>(layer)].w_mlp_out;
    if (dim < 0 || dim >= w_out.rows()) fail("restore dim out of range");
    w_out.row(dim) = row;
}

/// Realize a plan as per-pass hooks; shared weights stay untouched.
inline ForwardHooks to_hooks(const ModelWeights& w, const EditPlan& plan) {
    ForwardHooks h;
    for (const auto& e : plan.edits) {
        ForwardHooks::ValuePatch p;
        p.layer = e.layer;
        p.dim = e.dim;
        p.delta = edit_delta(w, e);
        h.value_patches.push_back(std::move(p));
    }
    for (const auto& s : plan.swaps) {
        ForwardHooks::PatternSwap ps;
        ps.layer = s.layer;
        ps.head = s.head;
        ps.pos_a = s.pos_a;
        ps.pos_b = s.pos_corr;
        h.pattern_swaps.push_back(ps);
    }
    h.swap_literal = plan.swap_literal;
    return h;
}

namespace detail {

inline int require_letter(const PreparedSample& s, int letter) {
    if (letter < 1 || letter >= static_cast<int>(s.letter_ids.size()))
        fail("target letter index out of range: " + std::to_string(letter));
    return letter;
}

} // namespace detail

/// One Eq. 8 edit per locus, anchor " A", explicit target letter.
inline EditPlan plan_edits(const PreparedSample& s,
                           const std::vector<discovery::ValueVectorLocus>& loci,
                           int target_letter, float lambda1 = 1.0f, float lambda2 = 8.0f) {
    if (loci.empty()) fail("edit plan needs at least one locus");
    detail::require_letter(s, target_letter);
    EditPlan plan;
    for (const auto& l : loci) {
        VectorEdit e;
        e.layer = l.layer;
        e.dim = l.dim;
        e.lambda1 = lambda1;
        e.lambda2 = lambda2;
        e.anchor_id = s.letter_ids[0];
        e.target_id = s.letter_ids[static_cast<std::size_t>(target_letter)];
        plan.edits.push_back(e);
    }
    return plan;
}

/// Infer. mode: target is the sample's gold letter.
inline EditPlan plan_edits_gold(const PreparedSample& s,
                                const std::vector<discovery::ValueVectorLocus>& loci,
                                float lambda1 = 1.0f, float lambda2 = 8.0f) {
    if (s.gold <= 0) fail("gold-target plan needs a sample with gold letter != A");
    return plan_edits(s, loci, s.gold, lambda1, lambda2);
}

/// Gold-free target rule: the non-A letter with the highest baseline logit,
/// i.e. the second-ranked letter overall when the sample is anchored. Ties
/// resolve to the smaller token id.
inline int gold_free_target(const PreparedSample& s, const Vec& baseline_logits) {
    if (s.letter_ids.size() < 2) fail("gold-free target needs at least two letters");
    int best = 1;
    for (int c = 2; c < static_cast<int>(s.letter_ids.size()); ++c) {
        const float lc = baseline_logits[s.letter_ids[static_cast<std::size_t>(c)]];
        const float lb = baseline_logits[s.letter_ids[static_cast<std::size_t>(best)]];
        if (lc > lb ||
            (lc == lb &&
             s.letter_ids[static_cast<std::size_t>(c)] < s.letter_ids[static_cast<std::size_t>(best)]))
            best = c;
    }
    return best;
}

/// Eva. mode: the sample must arrive with the gold field stripped, which is
/// how the no-label guarantee is enforced rather than merely promised.
inline EditPlan plan_edits_gold_free(const PreparedSample& s, const Vec& baseline_logits,
                                     const std::vector<discovery::ValueVectorLocus>& loci,
                                     float lambda1 = 1.0f, float lambda2 = 8.0f) {
    if (s.gold != -1) fail("gold-free plan expects a stripped sample (gold == -1)");
    return plan_edits(s, loci, gold_free_target(s, baseline_logits), lambda1, lambda2);
}

/// Eq. 9 plan: swap the final-row attention weights at the " A" marker and
/// the designated letter's marker.
inline EditPlan plan_attention_swap(const PreparedSample& s, int layer, int head,
                                    int target_letter) {
    detail::require_letter(s, target_letter);
    if (s.letter_pos.size() != s.letter_ids.size())
        fail("sample is missing letter positions for attention swap");
    EditPlan plan;
    AttentionSwap sw;
    sw.layer = layer;
    sw.head = head;
    sw.pos_a = s.letter_pos[0];
    sw.pos_corr = s.letter_pos[static_cast<std::size_t>(target_letter)];
    plan.swaps.push_back(sw);
    return plan;
}

} // namespace mitigation
} // namespace anchorscope
