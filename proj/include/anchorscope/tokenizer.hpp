#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "unicode.hpp"

namespace anchorscope {

/// Byte-level BPE tokenizer over the two-file GPT-2 distribution format
/// (vocab.json + merges.txt). Immutable after load; encode/decode are pure
/// and safe to call concurrently.
///
/// The pre-tokenizer reproduces the published GPT-2 pattern
///   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
/// with a hand-rolled scanner (std::regex has no Unicode classes). Leading
/// spaces are part of tokens, so "A" and " A" carry distinct ids.
class Vocab {
public:
    static Vocab load(const std::string& vocab_json_path, const std::string& merges_path) {
        Vocab v;
        v.init_byte_maps();

        std::ifstream vf(vocab_json_path);
        if (!vf) fail("cannot open vocab file: " + vocab_json_path);
        nlohmann::json j;
        try {
            vf >> j;
        } catch (const std::exception& e) {
            fail("failed to parse " + vocab_json_path + ": " + e.what());
        }
        const auto n = static_cast<int>(j.size());
        v.id_to_token_.assign(static_cast<std::size_t>(n), std::string());
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        for (auto it = j.begin(); it != j.end(); ++it) {
            const int id = it.value().get<int>();
            if (id < 0 || id >= n) fail("vocab id out of range: " + std::to_string(id));
            if (seen[static_cast<std::size_t>(id)]) fail("duplicate vocab id: " + std::to_string(id));
            seen[static_cast<std::size_t>(id)] = 1;
            v.id_to_token_[static_cast<std::size_t>(id)] = it.key();
            v.token_to_id_.emplace(it.key(), id);
        }
        if (static_cast<int>(v.token_to_id_.size()) != n)
            fail("vocab token->id map is not a bijection");

        std::ifstream mf(merges_path);
        if (!mf) fail("cannot open merges file: " + merges_path);
        std::string line;
        std::getline(mf, line); // "#version" header
        int rank = 0;
        while (std::getline(mf, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            v.merge_rank_.emplace(line, rank++);
        }
        if (v.merge_rank_.empty()) fail("no merge rules in " + merges_path);
        const auto eot = v.token_to_id_.find(std::string(kEndOfText));
        v.eot_id_ = eot == v.token_to_id_.end() ? -1 : eot->second;
        return v;
    }

    int size() const { return static_cast<int>(id_to_token_.size()); }

    int end_of_text_id() const { return eot_id_; }

    std::vector<int> encode(std::string_view text) const {
        std::vector<int> ids;
        if (eot_id_ < 0) {
            encode_segment(text, ids);
            return ids;
        }
        // The end-of-text marker splits the input before BPE runs, so its
        // neighbours never merge across it.
        std::size_t pos = 0;
        while (true) {
            const std::size_t hit = text.find(kEndOfText, pos);
            if (hit == std::string_view::npos) break;
            encode_segment(text.substr(pos, hit - pos), ids);
            ids.push_back(eot_id_);
            pos = hit + kEndOfText.size();
        }
        encode_segment(text.substr(pos), ids);
        return ids;
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string bytes;
        for (int id : ids) bytes += token_bytes(id);
        return replace_invalid_utf8(bytes);
    }

    /// Raw byte content of a single token (may be a partial UTF-8 sequence).
    std::string token_bytes(int id) const {
        if (id < 0 || id >= size()) fail("token id out of range: " + std::to_string(id));
        std::string out;
        const std::string& tok = id_to_token_[static_cast<std::size_t>(id)];
        for (char32_t cp : uni::to_codepoints(tok)) {
            if (cp >= kMappedMax || cp_to_byte_[cp] < 0) fail("unmappable char in token id " + std::to_string(id));
            out.push_back(static_cast<char>(cp_to_byte_[cp]));
        }
        return out;
    }

    /// Printable form of one token (invalid UTF-8 replaced).
    std::string token_display(int id) const { return replace_invalid_utf8(token_bytes(id)); }

    /// Id of a choice-letter token, A..E. The leading-space variants are the
    /// ones that index W_U in the logit-difference and edit formulas; the
    /// bare variants are exposed for diagnostics.
    int letter_token_id(char letter, bool leading_space) const {
        if (letter < 'A' || letter > 'E') fail(std::string("letter out of range: ") + letter);
        std::string text = leading_space ? std::string(" ") + letter : std::string(1, letter);
        const auto ids = encode(text);
        if (ids.size() != 1)
            fail("letter \"" + text + "\" did not encode to a single token");
        return ids[0];
    }

private:
    static constexpr char32_t kMappedMax = 512;
    static constexpr std::string_view kEndOfText = "<|endoftext|>";

    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> merge_rank_; // key: "left right"
    std::array<char32_t, 256> byte_to_cp_{};
    std::array<int, kMappedMax> cp_to_byte_{};
    int eot_id_ = -1;

    void encode_segment(std::string_view text, std::vector<int>& ids) const {
        for (const auto& [begin, end] : pre_tokenize(text))
            encode_piece(text.substr(begin, end - begin), ids);
    }

    void init_byte_maps() {
        cp_to_byte_.fill(-1);
        std::vector<int> direct;
        for (int b = '!'; b <= '~'; ++b) direct.push_back(b);
        for (int b = 0xA1; b <= 0xAC; ++b) direct.push_back(b);
        for (int b = 0xAE; b <= 0xFF; ++b) direct.push_back(b);
        std::vector<char> is_direct(256, 0);
        for (int b : direct) is_direct[static_cast<std::size_t>(b)] = 1;
        int next = 0;
        for (int b = 0; b < 256; ++b) {
            const char32_t cp = is_direct[static_cast<std::size_t>(b)]
                                    ? static_cast<char32_t>(b)
                                    : static_cast<char32_t>(256 + next++);
            byte_to_cp_[static_cast<std::size_t>(b)] = cp;
            cp_to_byte_[cp] = b;
        }
    }

    struct Cp {
        char32_t cp;
        std::size_t byte_begin;
        std::size_t byte_end;
    };

    enum class Cls { letter, number, space, other };

    static Cls classify(char32_t cp) {
        if (uni::is_space(cp)) return Cls::space;
        if (uni::is_letter(cp)) return Cls::letter;
        if (uni::is_number(cp)) return Cls::number;
        return Cls::other;
    }

    // Byte spans of the pre-tokenizer pieces, in order; concatenation of the
    // spans is the whole input.
    std::vector<std::pair<std::size_t, std::size_t>> pre_tokenize(std::string_view text) const {
        std::vector<Cp> cps;
        {
            std::size_t i = 0;
            while (i < text.size()) {
                std::size_t len = 0;
                const char32_t cp = uni::decode_cp(text, i, len);
                cps.push_back({cp, i, i + len});
                i += len;
            }
        }
        const std::size_t n = cps.size();
        std::vector<std::pair<std::size_t, std::size_t>> pieces;
        auto emit = [&](std::size_t a, std::size_t b) {
            pieces.emplace_back(cps[a].byte_begin, cps[b - 1].byte_end);
        };

        std::size_t i = 0;
        while (i < n) {
            // contractions: 's 't 're 've 'm 'll 'd
            if (cps[i].cp == U'\'' && i + 1 < n) {
                const char32_t c1 = cps[i + 1].cp;
                if (c1 == U's' || c1 == U't' || c1 == U'm' || c1 == U'd') {
                    emit(i, i + 2);
                    i += 2;
                    continue;
                }
                if (i + 2 < n) {
                    const char32_t c2 = cps[i + 2].cp;
                    if ((c1 == U'r' && c2 == U'e') || (c1 == U'v' && c2 == U'e') ||
                        (c1 == U'l' && c2 == U'l')) {
                        emit(i, i + 3);
                        i += 3;
                        continue;
                    }
                }
            }
            const bool leading_sp = cps[i].cp == U' ';
            const std::size_t k = leading_sp ? i + 1 : i;
            if (k < n) {
                const Cls cls = classify(cps[k].cp);
                if (cls != Cls::space) {
                    std::size_t j = k;
                    while (j < n && classify(cps[j].cp) == cls) ++j;
                    emit(i, j);
                    i = j;
                    continue;
                }
            }
            // whitespace runs, with the (?!\S) one-char holdback before words
            if (classify(cps[i].cp) == Cls::space) {
                std::size_t j = i;
                while (j < n && classify(cps[j].cp) == Cls::space) ++j;
                if (j == n || j - i > 1) {
                    const std::size_t stop = (j == n) ? j : j - 1;
                    emit(i, stop);
                    i = stop;
                } else {
                    // single non-' ' whitespace before a word stands alone
                    emit(i, i + 1);
                    ++i;
                }
                continue;
            }
            emit(i, i + 1); // unreachable for well-formed class tables
            ++i;
        }
        return pieces;
    }

    void encode_piece(std::string_view piece, std::vector<int>& out) const {
        // map bytes into the BPE unicode alphabet, one symbol per input byte
        std::vector<std::string> word;
        word.reserve(piece.size());
        for (unsigned char b : piece) {
            std::string sym;
            uni::append_cp(sym, byte_to_cp_[b]);
            word.push_back(std::move(sym));
        }
        if (word.empty()) return;

        while (word.size() > 1) {
            // lowest-rank adjacent pair
            int best_rank = std::numeric_limits<int>::max();
            std::size_t best_pos = 0;
            for (std::size_t p = 0; p + 1 < word.size(); ++p) {
                const auto it = merge_rank_.find(word[p] + " " + word[p + 1]);
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_pos = p;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            // merge every occurrence of that pair, left to right
            const std::string first = word[best_pos];
            const std::string second = word[best_pos + 1];
            std::vector<std::string> merged;
            merged.reserve(word.size());
            std::size_t p = 0;
            while (p < word.size()) {
                if (p + 1 < word.size() && word[p] == first && word[p + 1] == second) {
                    merged.push_back(first + second);
                    p += 2;
                } else {
                    merged.push_back(word[p]);
                    ++p;
                }
            }
            word.swap(merged);
        }
        for (const auto& sym : word) {
            const auto it = token_to_id_.find(sym);
            if (it == token_to_id_.end()) fail("symbol not in vocab: " + sym);
            out.push_back(it->second);
        }
    }

    // Replaces ill-formed sequences with U+FFFD, one replacement per maximal
    // valid subpart (the WHATWG rule, matching Python's errors="replace").
    static std::string replace_invalid_utf8(std::string_view bytes) {
        static constexpr std::string_view kRepl = "\xEF\xBF\xBD";
        std::string out;
        out.reserve(bytes.size());
        std::size_t i = 0;
        while (i < bytes.size()) {
            const auto b0 = static_cast<unsigned char>(bytes[i]);
            if (b0 < 0x80) {
                out.push_back(static_cast<char>(b0));
                ++i;
                continue;
            }
            std::size_t need = 0;
            unsigned char lo = 0x80, hi = 0xBF; // bounds for the first continuation
            if (b0 >= 0xC2 && b0 <= 0xDF) need = 1;
            else if (b0 == 0xE0) { need = 2; lo = 0xA0; }
            else if (b0 >= 0xE1 && b0 <= 0xEC) need = 2;
            else if (b0 == 0xED) { need = 2; hi = 0x9F; }
            else if (b0 >= 0xEE && b0 <= 0xEF) need = 2;
            else if (b0 == 0xF0) { need = 3; lo = 0x90; }
            else if (b0 >= 0xF1 && b0 <= 0xF3) need = 3;
            else if (b0 == 0xF4) { need = 3; hi = 0x8F; }
            else {
                out += kRepl; // lone continuation or invalid lead
                ++i;
                continue;
            }
            std::size_t taken = 0;
            bool ok = true;
            for (std::size_t k = 0; k < need; ++k) {
                if (i + 1 + k >= bytes.size()) { ok = false; break; }
                const auto c = static_cast<unsigned char>(bytes[i + 1 + k]);
                const unsigned char clo = k == 0 ? lo : 0x80;
                const unsigned char chi = k == 0 ? hi : 0xBF;
                if (c < clo || c > chi) { ok = false; break; }
                ++taken;
            }
            if (ok) {
                out.append(bytes.substr(i, need + 1));
                i += need + 1;
            } else {
                out += kRepl;
                i += 1 + taken;
            }
        }
        return out;
    }
};

} // namespace anchorscope
