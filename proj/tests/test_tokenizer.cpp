#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <anchorscope/tokenizer.hpp>

#include "helpers.hpp"

using anchorscope::Vocab;

TEST_CASE("tokenizer matches the reference corpus", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();

    std::ifstream f(testutil::fixture_path("tokenizer_cases.jsonl"));
    REQUIRE(f.good());
    std::string line;
    int checked = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        const std::string text = rec.at("text").get<std::string>();
        const auto want = rec.at("ids").get<std::vector<int>>();
        INFO("case " << checked << ": " << nlohmann::json(text).dump());
        const auto got = vocab.encode(text);
        REQUIRE(got == want);
        const std::string back = vocab.decode(got);
        const std::string want_back =
            rec.contains("roundtrip") ? rec.at("roundtrip").get<std::string>() : text;
        REQUIRE(back == want_back);
        ++checked;
    }
    REQUIRE(checked == 1000);
}

TEST_CASE("letter tokens carry known ids", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    REQUIRE(vocab.size() == 50257);
    REQUIRE(vocab.letter_token_id('A', true) == 317);
    REQUIRE(vocab.letter_token_id('B', true) == 347);
    REQUIRE(vocab.letter_token_id('A', false) == 32);
    REQUIRE(vocab.letter_token_id('B', false) == 33);
    REQUIRE(vocab.encode(" A") == std::vector<int>{317});
    REQUIRE_THROWS_AS(vocab.letter_token_id('F', true), anchorscope::Error);
    REQUIRE_THROWS_AS(vocab.letter_token_id('a', true), anchorscope::Error);
}

TEST_CASE("decode rejects out-of-range ids by name", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    REQUIRE_THROWS_WITH(vocab.decode({50257}), Catch::Matchers::ContainsSubstring("50257"));
    REQUIRE_THROWS_WITH(vocab.decode({-1}), Catch::Matchers::ContainsSubstring("-1"));
}

TEST_CASE("partial multi-byte sequences decode to replacement chars", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    // the treble clef splits into three byte-fallback tokens
    const auto ids = vocab.encode("\xf0\x9d\x84\x9e");
    REQUIRE(ids == std::vector<int>{47728, 226, 252});
    REQUIRE(vocab.decode(ids) == "\xf0\x9d\x84\x9e");
    // a truncated lead plus its valid continuations is one maximal subpart
    REQUIRE(vocab.decode({ids[0]}) == "\xef\xbf\xbd");
    REQUIRE(vocab.decode({ids[1]}) == "\xef\xbf\xbd");
    REQUIRE(vocab.decode({ids[0], ids[1]}) == "\xef\xbf\xbd");
}

TEST_CASE("end-of-text splits the input like the reference", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    REQUIRE(vocab.end_of_text_id() == 50256);
    REQUIRE(vocab.encode("<|endoftext|>") == std::vector<int>{50256});
    REQUIRE(vocab.encode("a<|endoftext|>b") == std::vector<int>{64, 50256, 65});
    REQUIRE(vocab.encode("x <|endoftext|>") == std::vector<int>{87, 220, 50256});
    REQUIRE(vocab.decode({64, 50256, 65}) == "a<|endoftext|>b");
}

TEST_CASE("token_display renders single tokens", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    REQUIRE(vocab.token_display(317) == " A");
    REQUIRE(vocab.token_display(2634) == "\xc3\xa9"); // é keeps its accent
    REQUIRE(vocab.token_bytes(220) == " ");
}

TEST_CASE("encode handles embedded nul and high bytes", "[tokenizer]") {
    REQUIRE_MODEL("gpt2");
    const Vocab& vocab = testutil::gpt2_vocab();
    const std::string with_nul("a\0b", 3);
    const auto ids = vocab.encode(with_nul);
    REQUIRE(vocab.decode(ids) == with_nul);
}
