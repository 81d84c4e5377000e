#!/usr/bin/env python3
"""Freeze tokenizer reference cases.

Runs the canonical slow GPT-2 tokenizer (pure-Python BPE from the
transformers package) over a deterministic 1000-string corpus and writes
text/ids pairs to tests/fixtures/tokenizer_cases.jsonl. The C++ tokenizer
test replays the file and must match every case exactly.
"""

import json
import pathlib
import random

from transformers import GPT2Tokenizer

CACHE = pathlib.Path.home() / ".cache" / "anchorscope" / "gpt2"
OUT = pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "tokenizer_cases.jsonl"

HAND_PICKED = [
    "",
    " ",
    "  ",
    "   ",
    "\t",
    "\n",
    " \n",
    "\n\n",
    "\t\tx",
    "a\tb",
    "Hello world",
    "Hello, world!",
    " Hello",
    "A",
    " A",
    " B",
    " C",
    " D",
    " E",
    "Answer: A",
    "Answer:  A",
    "don't",
    "I'll you've she's we're he'd I'm they'll",
    "it's it'sn't",
    "'s 't 're 've 'm 'll 'd",
    "rock'n'roll",
    "O'Brien's",
    "1234",
    "12 34",
    "year 1732 to the year 17",
    "3.14159",
    "-42",
    "a1b2c3",
    "  leading and trailing  ",
    "multiple   internal    spaces",
    "word\n\nword",
    "...",
    "?!",
    "e.g., etc.",
    "(parenthetical) [bracketed] {braced}",
    "C++ and C# and F#",
    "foo_bar baz-qux",
    "snake_case camelCase PascalCase",
    "https://example.com/path?q=1&r=2",
    "user@example.com",
    "café naïve résumé",
    "Zürich  Köln",
    "München",
    "ÀÈÌÒÙ àèìòù",
    "αβγδε ΑΒΓΔΕ",
    "Привет мир",
    "日本語のテキスト",
    "中文文本",
    "한국어 텍스트",
    "مرحبا بالعالم",
    "עברית",
    "हिन्दी",
    "ελληνικά words mixed с русским",
    "emoji 😀 test",
    "🤖🚀✨",
    "½ ¼ ¾",
    "№5 §2 ¶3",
    "«quoted» “curly” ‘single’",
    "dash – and — dashes",
    "ellipsis… done",
    " nbsp separated",
    "mixed thin spaces",
    "tab\tseparated\tvalues",
    "trailing tab\t",
    "50256 tokens",
    "<|endoftext|>",
    "Question: What is 2+2? Answer Choices: A: 3 B: 4 Answer:",
    "Question: pick one Answer Choices: A: cat B: dog C: bird D: fish E: none Answer:",
    "The war lasted from the year 1732 to the year 17",
    "When Mary and John went to the store, John gave a drink to",
    "  A:  B:  C:",
    "A: B: C: D: E:",
    "100000000",
    "0x1A2B",
    "e=mc^2",
    "π≈3.14159",
    "∀x∃y: x<y",
    "½+½=1",
    "x́ combining",
    "​zero width​",
    "ﬁligature ﬂow",
    "ｆｕｌｌｗｉｄｔｈ",
    "ﬀ ﬁ ﬂ ﬃ ﬄ",
    "ktṛṣṇa",
    "ʃəˈnɛl",
    "t̪ʰ",
    "ʹʺʻʼ",
    "a'b'c",
    "isn't  wasn't\tcan't",
    "I'd've",
    "y'all'll",
    "'twas",
    "'",
    "''",
    "'s",
    "x's",
    " 's",
    "word '",
    "' word",
]


def rand_corpus(rng):
    words = [
        "the", "quick", "brown", "fox", "jumps", "over", "lazy", "dog",
        "question", "answer", "choices", "model", "layer", "head", "token",
        "Paris", "London", "Tokyo", "river", "mountain", "seven", "green",
        "B", "C", "option", "letter", "value", "logit", "probability",
        "naïve", "café", "über", "señor", "Москва", "東京", "πράγμα",
    ]
    puncts = [".", ",", "!", "?", ";", ":", "...", "-", "--", "(", ")", '"', "'s", "'t", "'ll"]
    spaces = [" ", "  ", "\t", "\n", "\n\n", " \t", "   "]
    cases = []
    while len(cases) + len(HAND_PICKED) < 1000:
        n = rng.randint(1, 12)
        parts = []
        for i in range(n):
            r = rng.random()
            if r < 0.55:
                parts.append(rng.choice(words))
            elif r < 0.75:
                parts.append(str(rng.randint(0, 99999)))
            elif r < 0.9:
                parts.append(rng.choice(puncts))
            else:
                parts.append(rng.choice(words).upper())
            if i + 1 < n:
                parts.append(rng.choice(spaces) if rng.random() < 0.35 else " ")
        if rng.random() < 0.15:
            parts.insert(0, rng.choice(spaces))
        if rng.random() < 0.15:
            parts.append(rng.choice(spaces))
        cases.append("".join(parts))
    return cases


def main():
    tok = GPT2Tokenizer(str(CACHE / "vocab.json"), str(CACHE / "merges.txt"))
    rng = random.Random(20260825)
    texts = HAND_PICKED + rand_corpus(rng)
    assert len(texts) == 1000, len(texts)

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as f:
        for t in texts:
            ids = tok.encode(t)
            rt = tok.decode(ids)
            rec = {"text": t, "ids": ids, "roundtrip": rt}
            if rt == t:
                del rec["roundtrip"]
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    print(f"wrote {len(texts)} cases to {OUT}")


if __name__ == "__main__":
    main()
