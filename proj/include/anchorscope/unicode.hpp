#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace anchorscope::uni {

struct CpRange {
    char32_t lo;
    char32_t hi;
};

#include "unicode_data.inc"

namespace detail {
template <std::size_t N>
inline bool in_ranges(const CpRange (&table)[N], char32_t cp) {
    std::size_t lo = 0, hi = N;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (cp < table[mid].lo) {
            hi = mid;
        } else if (cp > table[mid].hi) {
            lo = mid + 1;
        } else {
            return true;
        }
    }
    return false;
}
} // namespace detail

inline bool is_letter(char32_t cp) { return detail::in_ranges(kLetterRanges, cp); }
inline bool is_number(char32_t cp) { return detail::in_ranges(kNumberRanges, cp); }
inline bool is_space(char32_t cp) { return detail::in_ranges(kSpaceRanges, cp); }

/// Decodes one UTF-8 codepoint starting at s[i]. Invalid bytes decode as
/// single-byte U+FFFD-class units of length 1 so the scanner always advances.
inline char32_t decode_cp(std::string_view s, std::size_t i, std::size_t& len) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        len = 1;
        return b0;
    }
    int need = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        need = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        need = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        need = 3;
        cp = b0 & 0x07;
    } else {
        len = 1;
        return 0xFFFD;
    }
    if (i + static_cast<std::size_t>(need) >= s.size()) {
        // truncated sequence at end of string
        len = 1;
        return 0xFFFD;
    }
    for (int k = 1; k <= need; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((bk & 0xC0) != 0x80) {
            len = 1;
            return 0xFFFD;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    len = static_cast<std::size_t>(need) + 1;
    return cp;
}

/// Encodes a codepoint as UTF-8 and appends to out.
inline void append_cp(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// Splits a UTF-8 string into codepoints.
inline std::vector<char32_t> to_codepoints(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t len = 0;
        out.push_back(decode_cp(s, i, len));
        i += len;
    }
    return out;
}

} // namespace anchorscope::uni
