#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "tokenizer.hpp"

namespace anchorscope {

/// Template banks for the synthesized tasks. Shipped as repo data files and
/// versioned so that generated samples are pinned to a bank revision.
struct Banks {
    std::vector<std::string> names;
    std::vector<std::string> places;
    std::vector<std::string> objects;
    std::vector<std::string> nouns;
    std::vector<std::string> words;
    std::string version;

    static std::vector<std::string> load_list(const std::string& path) {
        std::ifstream f(path);
        if (!f) fail("cannot open word bank: " + path);
        std::vector<std::string> out;
        std::string line;
        while (std::getline(f, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (!line.empty()) out.push_back(line);
        }
        if (out.empty()) fail("empty word bank: " + path);
        return out;
    }

    static Banks load(const std::string& dir) {
        Banks b;
        b.names = load_list(dir + "/names.txt");
        b.places = load_list(dir + "/places.txt");
        b.objects = load_list(dir + "/objects.txt");
        b.nouns = load_list(dir + "/nouns.txt");
        b.words = load_list(dir + "/words.txt");
        b.version = load_list(dir + "/VERSION").front();
        return b;
    }
};

/// One multiple-choice record. `gold` indexes `choices`; letters are assigned
/// by position (0 = A).
struct Sample {
    std::string question;
    std::vector<std::string> choices;
    int gold = 0;
    std::string tag;
};

struct Dataset {
    std::string name;
    std::vector<Sample> samples;
};

/// Loader output. Records whose gold answer sits at letter A are held aside:
/// the anchored-bias metrics need gold != A, while the side list stays
/// available as a few-shot exemplar pool.
struct LoadedDataset {
    Dataset eval;
    std::vector<Sample> gold_a;
    int skipped = 0; // records with unusable arity or missing gold
};

struct InferEvaSplit {
    Dataset infer;
    Dataset eva;
};

namespace datasets {

inline constexpr int kMaxChoices = 5;

inline std::string letter_of(int idx) {
    if (idx < 0 || idx >= kMaxChoices) fail("choice index out of range: " + std::to_string(idx));
    return std::string(1, static_cast<char>('A' + idx));
}

/// Render the fixed prompt shape:
/// "Question: {q} Answer Choices: A: {c1} B: {c2} ... Answer:"
inline std::string render_prompt(const Sample& s) {
    if (s.choices.size() < 2 || s.choices.size() > kMaxChoices)
        fail("sample must offer 2 to 5 choices, got " + std::to_string(s.choices.size()));
    std::string out = "Question: " + s.question + " Answer Choices:";
    for (std::size_t i = 0; i < s.choices.size(); ++i)
        out += " " + letter_of(static_cast<int>(i)) + ": " + s.choices[i];
    out += " Answer:";
    return out;
}

/// Indirect-object identification, wrapped as QA. The giver repeats as the
/// subject of the last clause, so the indirect object (the other name) is
/// correct; it is always placed at B so that answering A is always the
/// anchored failure. Sampling is without replacement over (name pair, place,
/// object) tuples.
inline Dataset make_ioi(const Banks& banks, int n, std::uint64_t seed) {
    const std::size_t name_count = banks.names.size();
    if (name_count < 2) fail("IOI needs at least two names in the bank");
    const std::size_t capacity =
        name_count * (name_count - 1) * banks.places.size() * banks.objects.size();
    if (static_cast<std::size_t>(n) > capacity)
        fail("IOI count " + std::to_string(n) + " exceeds distinct tuple capacity " +
             std::to_string(capacity));
    Rng rng(seed);
    Dataset d;
    d.name = "ioi";
    d.samples.reserve(static_cast<std::size_t>(n));
    std::set<std::tuple<std::string, std::string, std::string, std::string>> used;
    for (int i = 0; i < n; ++i) {
        std::string name1, name2, place, object;
        do {
            name1 = rng.pick(banks.names);
            name2 = name1;
            while (name2 == name1) name2 = rng.pick(banks.names);
            place = rng.pick(banks.places);
            object = rng.pick(banks.objects);
        } while (!used.emplace(name1, name2, place, object).second);
        const bool vowel = std::string_view("aeiou").find(object[0]) != std::string_view::npos;
        Sample s;
        s.question = "Afterwards " + name1 + " and " + name2 + " went to the " + place + ", and " +
                     name1 + " gave " + (vowel ? "an " : "a ") + object + " to";
        s.choices = {name1, name2};
        s.gold = 1;
        s.tag = "ioi";
        d.samples.push_back(std::move(s));
    }
    return d;
}

/// Greater-than, wrapped as QA. The span starts at year 17XX; choice A is an
/// invalid two-digit continuation (at most XX) and B through D are distinct
/// valid ones, with gold uniform over the valid letters.
inline Dataset make_greater_than(const Banks& banks, int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.name = "greater";
    d.samples.reserve(static_cast<std::size_t>(n));
    auto two_digit = [](int v) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02d", v);
        return std::string(buf);
    };
    for (int i = 0; i < n; ++i) {
        const int xx = rng.uniform_int(2, 90);
        const auto noun = rng.pick(banks.nouns);
        Sample s;
        s.question = "The " + noun + " lasted from the year 17" + two_digit(xx) +
                     " to the year 17";
        const int invalid = rng.uniform_int(0, xx);
        std::vector<int> valid;
        while (valid.size() < 3) {
            const int v = rng.uniform_int(xx + 1, 99);
            if (std::find(valid.begin(), valid.end(), v) == valid.end()) valid.push_back(v);
        }
        s.choices = {two_digit(invalid), two_digit(valid[0]), two_digit(valid[1]),
                     two_digit(valid[2])};
        s.gold = rng.uniform_int(1, 3);
        s.tag = "greater";
        d.samples.push_back(std::move(s));
    }
    return d;
}

namespace detail {

inline std::string random_lowercase(Rng& rng, int lo, int hi) {
    const int len = rng.uniform_int(lo, hi);
    std::string s(static_cast<std::size_t>(len), 'a');
    for (auto& c : s) c = static_cast<char>('a' + rng.uniform_int(0, 25));
    return s;
}

template <typename WordFn>
inline std::string word_run(Rng& rng, WordFn&& word, int lo, int hi) {
    const int count = rng.uniform_int(lo, hi);
    std::string out;
    for (int i = 0; i < count; ++i) out += (i ? " " : "") + word(rng);
    return out;
}

template <typename WordFn>
inline Dataset make_random(const char* name, int n, std::uint64_t seed, int arity_lo,
                           int arity_hi, WordFn&& word) {
    if (arity_lo < 2 || arity_hi > kMaxChoices || arity_lo > arity_hi)
        fail(std::string(name) + " arity range must sit inside [2, 5]");
    Rng rng(seed);
    Dataset d;
    d.name = name;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.question = word_run(rng, word, 8, 13) + "?";
        const int arity = rng.uniform_int(arity_lo, arity_hi);
        while (static_cast<int>(s.choices.size()) < arity) {
            auto c = word_run(rng, word, 1, 4);
            if (std::find(s.choices.begin(), s.choices.end(), c) == s.choices.end())
                s.choices.push_back(std::move(c));
        }
        s.gold = rng.uniform_int(1, arity - 1);
        s.tag = name;
        d.samples.push_back(std::move(s));
    }
    return d;
}

} // namespace detail

/// Content-free control: a gibberish multi-word question with gibberish
/// choices, keeping only the MCQ scaffold meaningful.
inline Dataset make_random_chars(int n, std::uint64_t seed, int arity_lo = 2,
                                 int arity_hi = kMaxChoices) {
    return detail::make_random("random-chars", n, seed, arity_lo, arity_hi,
                               [](Rng& r) { return detail::random_lowercase(r, 5, 10); });
}

/// Content-free control: unrelated dictionary words as question and choices.
inline Dataset make_random_words(const Banks& banks, int n, std::uint64_t seed, int arity_lo = 2,
                                 int arity_hi = kMaxChoices) {
    if (banks.words.size() < 16) fail("word bank too small for random-words synthesis");
    return detail::make_random("random-words", n, seed, arity_lo, arity_hi,
                               [&banks](Rng& r) { return r.pick(banks.words); });
}

namespace detail {

inline void place_sample(LoadedDataset& out, Sample s) {
    if (s.gold == 0)
        out.gold_a.push_back(std::move(s));
    else
        out.eval.samples.push_back(std::move(s));
}

} // namespace detail

/// BIG-bench task.json: {"examples": [{"input", "target_scores": {...}}]}.
/// Choice order follows the file, so parsing keeps object key order. Records
/// with more than five choices or without a unique best score are skipped.
inline LoadedDataset load_bigbench_json(const std::string& path, const std::string& tag) {
    std::ifstream f(path);
    if (!f) fail("cannot open dataset file: " + path);
    nlohmann::ordered_json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail("failed to parse " + path + ": " + e.what());
    }
    if (!j.contains("examples")) fail("no \"examples\" array in " + path);

    LoadedDataset out;
    out.eval.name = tag;
    for (const auto& ex : j.at("examples")) {
        if (!ex.contains("input") || !ex.contains("target_scores")) {
            ++out.skipped;
            continue;
        }
        Sample s;
        s.question = ex.at("input").get<std::string>();
        s.tag = tag;
        int best = -1, best_count = 0;
        double best_score = 0.0;
        for (const auto& [choice, score] : ex.at("target_scores").items()) {
            const double sc = score.get<double>();
            const int idx = static_cast<int>(s.choices.size());
            s.choices.push_back(choice);
            if (best < 0 || sc > best_score) {
                best = idx;
                best_score = sc;
                best_count = 1;
            } else if (sc == best_score) {
                ++best_count;
            }
        }
        if (s.choices.size() < 2 || s.choices.size() > kMaxChoices || best_count != 1) {
            ++out.skipped;
            continue;
        }
        s.gold = best;
        detail::place_sample(out, std::move(s));
    }
    return out;
}

/// JSONL QA records. Two shapes are accepted per line: the ARC/CSQA shape
/// {"question": {"stem", "choices": [{"label", "text"}]}, "answerKey"} and
/// the generic shape {"question", "choices", "gold"}.
inline LoadedDataset load_qa_jsonl(const std::string& path, const std::string& tag) {
    std::ifstream f(path);
    if (!f) fail("cannot open dataset file: " + path);
    LoadedDataset out;
    out.eval.name = tag;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Sample s;
        s.tag = tag;
        if (j.contains("question") && j.at("question").is_object()) {
            const auto& q = j.at("question");
            s.question = q.at("stem").get<std::string>();
            if (!j.contains("answerKey")) {
                ++out.skipped;
                continue;
            }
            const auto key = j.at("answerKey").get<std::string>();
            int gold = -1;
            for (const auto& c : q.at("choices")) {
                const auto label = c.at("label").get<std::string>();
                if (label == key) gold = static_cast<int>(s.choices.size());
                s.choices.push_back(c.at("text").get<std::string>());
            }
            if (gold < 0) {
                ++out.skipped;
                continue;
            }
            s.gold = gold;
        } else {
            s.question = j.at("question").get<std::string>();
            s.choices = j.at("choices").get<std::vector<std::string>>();
            s.gold = j.at("gold").get<int>();
            if (j.contains("tag")) s.tag = j.at("tag").get<std::string>();
        }
        if (s.choices.size() < 2 || s.choices.size() > kMaxChoices || s.gold < 0 ||
            s.gold >= static_cast<int>(s.choices.size())) {
            ++out.skipped;
            continue;
        }
        detail::place_sample(out, std::move(s));
    }
    return out;
}

/// Seeded 90/10 split into the discovery (Infer) and held-out (Eva) sets.
/// Eva takes floor(n/10) samples; both halves keep the original order.
inline InferEvaSplit split_infer_eva(const Dataset& d, std::uint64_t seed) {
    const std::size_t n = d.samples.size();
    const std::size_t n_eva = n / 10;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    std::vector<char> in_eva(n, 0);
    for (std::size_t i = 0; i < n_eva; ++i) in_eva[idx[i]] = 1;

    InferEvaSplit split;
    split.infer.name = d.name + "-infer";
    split.eva.name = d.name + "-eva";
    for (std::size_t i = 0; i < n; ++i)
        (in_eva[i] ? split.eva : split.infer).samples.push_back(d.samples[i]);
    return split;
}

/// Token positions of the " X" letter markers inside a rendered prompt; the
/// marker for each choice is the letter token immediately followed by ":".
/// Letters must appear in order, which rules out collisions with letter-like
/// words earlier in the question.
inline std::vector<int> letter_positions(const std::vector<int>& ids, int n_choices,
                                         const std::vector<int>& letter_ids, int colon_id) {
    if (n_choices < 2 || n_choices > kMaxChoices)
        fail("letter_positions expects 2 to 5 choices");
    if (static_cast<int>(letter_ids.size()) < n_choices)
        fail("letter id table shorter than choice count");
    std::vector<int> pos;
    int from = 0;
    for (int c = 0; c < n_choices; ++c) {
        int found = -1;
        for (int t = from; t + 1 < static_cast<int>(ids.size()); ++t) {
            if (ids[static_cast<std::size_t>(t)] == letter_ids[static_cast<std::size_t>(c)] &&
                ids[static_cast<std::size_t>(t) + 1] == colon_id) {
                found = t;
                break;
            }
        }
        if (found < 0)
            fail("choice marker " + letter_of(c) + ": not found in prompt tokens");
        pos.push_back(found);
        from = found + 1;
    }
    return pos;
}

inline std::vector<int> letter_positions(const Vocab& vocab, const std::vector<int>& ids,
                                         int n_choices) {
    std::vector<int> letter_ids;
    for (int c = 0; c < kMaxChoices; ++c)
        letter_ids.push_back(vocab.letter_token_id(static_cast<char>('A' + c), true));
    const auto colon = vocab.encode(":");
    if (colon.size() != 1) fail("colon does not encode to a single token");
    return letter_positions(ids, n_choices, letter_ids, colon[0]);
}

} // namespace datasets
} // namespace anchorscope
