#!/usr/bin/env python3
"""Regenerate include/anchorscope/unicode_data.inc.

Emits sorted codepoint ranges for the three character classes the GPT-2
pre-tokenizer pattern cares about: \\p{L}, \\p{N} and \\s. Ranges for L and N
come from unicodedata general categories; the whitespace set is probed
through the `regex` module so it matches what the reference pattern matches.
"""

import sys
import unicodedata

try:
    import regex
except ImportError:
    sys.exit("needs the `regex` package (pip install regex)")

MAX_CP = 0x110000


def ranges_of(pred):
    out = []
    start = None
    for cp in range(MAX_CP):
        if pred(cp):
            if start is None:
                start = cp
        elif start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def cat(cp):
    return unicodedata.category(chr(cp))


ws_re = regex.compile(r"\s")

letters = ranges_of(lambda cp: cat(cp).startswith("L"))
numbers = ranges_of(lambda cp: cat(cp).startswith("N"))
spaces = ranges_of(lambda cp: ws_re.fullmatch(chr(cp)) is not None)


def emit(f, name, ranges):
    f.write(f"inline constexpr CpRange {name}[] = {{\n")
    for i in range(0, len(ranges), 6):
        row = ", ".join(f"{{0x{a:X}, 0x{b:X}}}" for a, b in ranges[i : i + 6])
        f.write(f"    {row},\n")
    f.write("};\n\n")


with open("include/anchorscope/unicode_data.inc", "w") as f:
    f.write("// Generated by scripts/gen_unicode_tables.py (Unicode data from\n")
    f.write(f"// Python {sys.version.split()[0]}, unidata {unicodedata.unidata_version}). Do not edit by hand.\n\n")
    emit(f, "kLetterRanges", letters)
    emit(f, "kNumberRanges", numbers)
    emit(f, "kSpaceRanges", spaces)

print(f"letters: {len(letters)} ranges, numbers: {len(numbers)}, spaces: {len(spaces)}")
