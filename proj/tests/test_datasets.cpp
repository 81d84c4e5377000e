#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <anchorscope/datasets.hpp>

#include "helpers.hpp"

using anchorscope::Banks;
using anchorscope::Dataset;
using anchorscope::Sample;
using namespace anchorscope::datasets;

namespace {

const Banks& banks() {
    static const Banks b = Banks::load(testutil::banks_dir());
    return b;
}

int count_words(const std::string& s) {
    int n = s.empty() ? 0 : 1;
    for (char c : s)
        if (c == ' ') ++n;
    return n;
}

} // namespace

TEST_CASE("banks load with the expected shapes", "[datasets]") {
    const Banks& b = banks();
    REQUIRE(b.names.size() == 20);
    REQUIRE(b.places.size() == 8);
    REQUIRE(b.objects.size() == 8);
    REQUIRE(b.nouns.size() == 20);
    REQUIRE(b.words.size() >= 500);
    REQUIRE(!b.version.empty());
    REQUIRE_THROWS_AS(Banks::load("/nonexistent"), anchorscope::Error);
}

TEST_CASE("render_prompt emits the fixed single-line shape", "[datasets]") {
    Sample s;
    s.question = "What color is the sky?";
    s.choices = {"green", "blue", "red"};
    REQUIRE(render_prompt(s) ==
            "Question: What color is the sky? "
            "Answer Choices: A: green B: blue C: red Answer:");

    s.choices = {"one"};
    REQUIRE_THROWS_AS(render_prompt(s), anchorscope::Error);
    s.choices = {"1", "2", "3", "4", "5", "6"};
    REQUIRE_THROWS_AS(render_prompt(s), anchorscope::Error);
}

TEST_CASE("make_ioi synthesizes distinct giver-recipient tuples", "[datasets]") {
    const Dataset d = make_ioi(banks(), 200, 11);
    REQUIRE(d.samples.size() == 200);
    std::set<std::string> questions;
    for (const auto& s : d.samples) {
        REQUIRE(s.choices.size() == 2);
        REQUIRE(s.gold == 1);
        REQUIRE(s.choices[0] != s.choices[1]);
        const std::string& q = s.question;
        REQUIRE(q.rfind("Afterwards " + s.choices[0] + " and " + s.choices[1] +
                            " went to the ",
                        0) == 0);
        REQUIRE(q.find(", and " + s.choices[0] + " gave a") != std::string::npos);
        REQUIRE(q.substr(q.size() - 3) == " to");
        const bool has_an = q.find(" gave an ") != std::string::npos;
        const auto obj_pos = q.find(has_an ? " gave an " : " gave a ") + (has_an ? 9 : 8);
        const char first = q[obj_pos];
        REQUIRE(has_an == (std::string("aeiou").find(first) != std::string::npos));
        questions.insert(q);
    }
    REQUIRE(questions.size() == 200);

    // seeding is reproducible and material
    REQUIRE(make_ioi(banks(), 5, 11).samples[0].question == d.samples[0].question);
    REQUIRE(make_ioi(banks(), 5, 12).samples[0].question != d.samples[0].question);

    REQUIRE_THROWS_WITH(make_ioi(banks(), 1000000, 1),
                        Catch::Matchers::ContainsSubstring("capacity"));
}

TEST_CASE("make_greater_than keeps the invalid year at A", "[datasets]") {
    const Dataset d = make_greater_than(banks(), 150, 21);
    REQUIRE(d.samples.size() == 150);
    for (const auto& s : d.samples) {
        REQUIRE(s.choices.size() == 4);
        REQUIRE(s.gold >= 1);
        REQUIRE(s.gold <= 3);
        const auto cut = s.question.find(" to the year 17");
        REQUIRE(cut != std::string::npos);
        const int xx = std::stoi(s.question.substr(cut - 2, 2));
        REQUIRE(std::stoi(s.choices[0]) <= xx);
        std::set<int> valid;
        for (int c = 1; c < 4; ++c) {
            REQUIRE(std::stoi(s.choices[static_cast<std::size_t>(c)]) > xx);
            valid.insert(std::stoi(s.choices[static_cast<std::size_t>(c)]));
        }
        REQUIRE(valid.size() == 3);
        REQUIRE(s.question.rfind("The ", 0) == 0);
        REQUIRE(s.question.back() == '7');
    }
}

TEST_CASE("random controls carry gibberish questions and distinct choices", "[datasets]") {
    const Dataset chars = make_random_chars(100, 31);
    const Dataset words = make_random_words(banks(), 100, 32);
    for (const Dataset* d : {&chars, &words}) {
        REQUIRE(d->samples.size() == 100);
        for (const auto& s : d->samples) {
            REQUIRE(s.question.back() == '?');
            const int qw = count_words(s.question.substr(0, s.question.size() - 1));
            REQUIRE(qw >= 8);
            REQUIRE(qw <= 13);
            REQUIRE(s.choices.size() >= 2);
            REQUIRE(s.choices.size() <= 5);
            REQUIRE(s.gold >= 1);
            REQUIRE(s.gold < static_cast<int>(s.choices.size()));
            std::set<std::string> uniq(s.choices.begin(), s.choices.end());
            REQUIRE(uniq.size() == s.choices.size());
            for (const auto& c : s.choices) {
                REQUIRE(count_words(c) >= 1);
                REQUIRE(count_words(c) <= 4);
            }
        }
    }
    REQUIRE(make_random_chars(3, 31).samples[0].question == chars.samples[0].question);
    REQUIRE_THROWS_AS(make_random_chars(3, 1, 1, 5), anchorscope::Error);
    REQUIRE_THROWS_AS(make_random_chars(3, 1, 2, 6), anchorscope::Error);
}

TEST_CASE("bigbench loader separates gold-A records and skips bad ones", "[datasets]") {
    const auto loaded =
        load_bigbench_json(testutil::fixture_path("mcq_bigbench.json"), "bb");
    REQUIRE(loaded.eval.samples.size() == 2);
    REQUIRE(loaded.gold_a.size() == 1);
    REQUIRE(loaded.skipped == 3); // tie, six choices, missing scores

    const auto& first = loaded.eval.samples[0];
    REQUIRE(first.choices == std::vector<std::string>{"January", "February", "March"});
    REQUIRE(first.gold == 1);
    REQUIRE(first.tag == "bb");
    REQUIRE(loaded.gold_a[0].gold == 0);

    REQUIRE_THROWS_AS(load_bigbench_json("/nonexistent.json", "x"), anchorscope::Error);
}

TEST_CASE("jsonl loader accepts both record shapes", "[datasets]") {
    const auto loaded = load_qa_jsonl(testutil::fixture_path("mcq_arc.jsonl"), "arc");
    REQUIRE(loaded.eval.samples.size() == 2);
    REQUIRE(loaded.gold_a.size() == 1);
    REQUIRE(loaded.skipped == 3); // no key, unmatched key, single choice

    REQUIRE(loaded.eval.samples[0].question ==
            "Which gas do plants absorb from the atmosphere?");
    REQUIRE(loaded.eval.samples[0].gold == 1);
    REQUIRE(loaded.eval.samples[1].choices.size() == 5);
    REQUIRE(loaded.eval.samples[1].gold == 4);
    REQUIRE(loaded.eval.samples[1].tag == "generic");
}

TEST_CASE("split_infer_eva is a seeded order-preserving 90/10 partition", "[datasets]") {
    const Dataset d = make_ioi(banks(), 100, 41);
    const auto split = split_infer_eva(d, 99);
    REQUIRE(split.infer.samples.size() == 90);
    REQUIRE(split.eva.samples.size() == 10);
    REQUIRE(split.infer.name == "ioi-infer");
    REQUIRE(split.eva.name == "ioi-eva");

    // partition: every original sample lands in exactly one half, in order
    std::vector<std::string> merged;
    std::size_t ii = 0, ei = 0;
    for (const auto& s : d.samples) {
        if (ii < split.infer.samples.size() && split.infer.samples[ii].question == s.question) {
            ++ii;
        } else {
            REQUIRE(ei < split.eva.samples.size());
            REQUIRE(split.eva.samples[ei].question == s.question);
            ++ei;
        }
    }
    REQUIRE(ii == split.infer.samples.size());
    REQUIRE(ei == split.eva.samples.size());

    const auto again = split_infer_eva(d, 99);
    REQUIRE(again.eva.samples[0].question == split.eva.samples[0].question);
    const auto other = split_infer_eva(d, 100);
    bool same = other.eva.samples.size() == split.eva.samples.size();
    for (std::size_t i = 0; same && i < other.eva.samples.size(); ++i)
        same = other.eva.samples[i].question == split.eva.samples[i].question;
    REQUIRE(!same);
}

TEST_CASE("letter_positions finds in-order markers", "[datasets]") {
    // letter ids 10..14, colon id 7: markers at 2 and 5
    const std::vector<int> ids = {1, 2, 10, 7, 3, 11, 7, 4};
    const std::vector<int> letters = {10, 11, 12, 13, 14};
    REQUIRE(letter_positions(ids, 2, letters, 7) == std::vector<int>{2, 5});

    // a letter token without the colon is not a marker
    const std::vector<int> decoy = {10, 4, 10, 7, 3, 11, 7, 4};
    REQUIRE(letter_positions(decoy, 2, letters, 7) == std::vector<int>{2, 5});

    REQUIRE_THROWS_WITH(letter_positions(ids, 3, letters, 7),
                        Catch::Matchers::ContainsSubstring("C:"));
    REQUIRE_THROWS_AS(letter_positions(ids, 1, letters, 7), anchorscope::Error);
}

TEST_CASE("letter_positions agrees with the tokenizer on a rendered prompt", "[datasets][model]") {
    REQUIRE_MODEL("gpt2");
    const auto& vocab = testutil::gpt2_vocab();
    Sample s;
    s.question = "Pick the letter B please.";
    s.choices = {"alpha", "beta", "gamma"};
    const auto ids = vocab.encode(render_prompt(s));
    const auto pos = letter_positions(vocab, ids, 3);
    REQUIRE(pos.size() == 3);
    const auto colon = vocab.encode(":");
    for (int c = 0; c < 3; ++c) {
        REQUIRE(ids[static_cast<std::size_t>(pos[static_cast<std::size_t>(c)])] ==
                vocab.letter_token_id(static_cast<char>('A' + c), true));
        REQUIRE(ids[static_cast<std::size_t>(pos[static_cast<std::size_t>(c)]) + 1] == colon[0]);
    }
}
