#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The claimscope Authors
"""Regenerates the committed demo/golden fixtures under data/fixtures/.

Each case is described at the sentence level: the token-level attention is
built so that the mean over every lower-triangular sentence block equals the
listed value exactly (up to float32 rounding). A leading BOS token acts as
the attention sink and soaks up the remaining row mass, so every row stays
causal and row-stochastic.

Tokenization is whitespace-delimited words, matching the synthetic backend.
"""

import hashlib
import json
import math
import pathlib
import struct
import unicodedata

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"

ENTAIL = [0.92, 0.06, 0.02]
NEUTRAL = [0.05, 0.90, 0.05]


def case2_values():
    # 15 lower-triangular entries with population mean 0.0135 and std 0.0284;
    # the IKEA sentence (4) reaches the target (0) at 0.0768.
    fixed = {(1, 0): 0.0041, (2, 0): 0.0022, (3, 0): 0.0035, (4, 0): 0.0768,
             (5, 0): 0.0030, (2, 1): 0.0028, (3, 1): 0.0016, (4, 1): 0.0012,
             (4, 2): 0.0009, (4, 3): 0.0024, (5, 1): 0.0008, (5, 2): 0.0010,
             (5, 3): 0.0046}
    n, mu, sd = 15, 0.0135, 0.0284
    rest = n * mu - sum(fixed.values())
    rest_sq = n * (sd * sd + mu * mu) - sum(v * v for v in fixed.values())
    prod = (rest * rest - rest_sq) / 2
    big = (rest + math.sqrt(rest * rest - 4 * prod)) / 2
    fixed[(5, 4)] = big
    fixed[(3, 2)] = rest - big
    return fixed


CASES = {
    "case0_ocean": {
        "sentences": [
            "The ocean is a crucial carbon sink.",
            "Marine ecosystems absorb vast amounts of CO2.",
            "Conversely, the ocean does not play any role in climate regulation.",
            "Protecting these habitats is vital for mitigating climate change.",
            "This is because healthy oceans sequester carbon.",
        ],
        "target": 0,
        "values": {(1, 0): 0.0950, (2, 0): 0.0620, (2, 1): 0.0210,
                   (3, 0): 0.0180, (3, 1): 0.0240, (3, 2): 0.0150,
                   (4, 0): 0.0160, (4, 1): 0.0190, (4, 2): 0.0090,
                   (4, 3): 0.0310},
        "nli": {(1, 0): ENTAIL, (0, 2): [0.02, 0.07, 0.91],
                (2, 0): [0.03, 0.10, 0.87], (4, 0): [0.40, 0.55, 0.05],
                (4, 3): [0.35, 0.60, 0.05]},
    },
    "case1_sun": {
        "sentences": [
            "The sun is a star.",
            "It is the center of our solar system.",
            "The sun is a planet.",
            "All planets revolve around it.",
        ],
        "target": 0,
        # Lower-triangle mean over all 12 off-diagonal cells is 0.0349.
        "values": {(1, 0): 0.1150, (2, 0): 0.1288, (2, 1): 0.0200,
                   (3, 0): 0.0300, (3, 1): 0.0450, (3, 2): 0.0800},
        "nli": {(1, 0): ENTAIL, (0, 2): [0.01, 0.03, 0.96],
                (2, 0): [0.01, 0.04, 0.95], (0, 0): [0.98, 0.01, 0.01]},
    },
    "case2_bookshelf": {
        "sentences": [
            "Mark decided to build a bookshelf from scratch.",
            "He started by carefully measuring the space in his living room.",
            "Next, he bought high-quality oak wood and cut each piece to the exact size.",
            "He spent a full weekend sanding, assembling, and staining the bookshelf.",
            "He found that IKEA fits perfectly to his requirements.",
            "In the end, the bookshelf was sturdy, fit perfectly in the space, and looked professionally made.",
        ],
        "target": 0,
        "values": case2_values(),
        "nli": {(0, 4): [0.03, 0.12, 0.85], (4, 0): [0.06, 0.22, 0.72],
                (3, 0): [0.30, 0.65, 0.05]},
    },
    "case3_streetlights": {
        "sentences": [
            "Many cities are exploring the idea of replacing traditional streetlights with smart LED systems.",
            "These smart lights are far more energy-efficient than conventional bulbs, helping municipalities cut electricity costs.",
            "In fact, several pilot programs have reported savings of up to 60% on lighting expenses after switching to LEDs.",
            "However, the data systems that control these lights require regular software updates and cybersecurity measures, which have added unexpected ongoing costs for some cities.",
            "In some cases, these challenges have led municipalities to abandon LED upgrades altogether and return to conventional lighting.",
        ],
        "target": 2,
        "values": {(1, 0): 0.0005, (2, 0): 0.0004, (2, 1): 0.0024,
                   (3, 0): 0.0003, (3, 1): 0.0004, (3, 2): 0.0006,
                   (4, 0): 0.0002, (4, 1): 0.0003, (4, 2): 0.0008,
                   (4, 3): 0.0005},
        "nli": {(1, 2): [0.81, 0.15, 0.04], (2, 4): [0.02, 0.18, 0.80],
                (4, 2): [0.03, 0.30, 0.67], (3, 2): [0.04, 0.56, 0.40]},
    },
}


def word_spans(text, start):
    spans, i = [], 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace():
            j += 1
        spans.append((start + i, start + j))
        i = j
    return spans


def build(case):
    sentences = case["sentences"]
    text = unicodedata.normalize("NFC", " ".join(sentences))
    tokens = [(0, 0, True)]  # BOS sink
    owner = [-1]
    pos = 0
    for s_idx, sentence in enumerate(sentences):
        for (a, b) in word_spans(sentence, pos):
            tokens.append((a, b, False))
            owner.append(s_idx)
        pos += len(sentence) + 1
    n = len(tokens)
    sizes = [owner.count(s) for s in range(len(sentences))]
    values = case["values"]

    # Largest per-token self-block weight every row can afford.
    diag = 0.01
    for i in range(len(sentences)):
        cross = sum(sizes[j] * values.get((i, j), 0.0) for j in range(i))
        assert cross < 1.0, (i, cross)
        diag = min(diag, 0.5 * (1.0 - cross) / sizes[i])

    rows = []
    for k in range(n):
        row = [0.0] * n
        if owner[k] < 0:
            row[0] = 1.0
        else:
            i = owner[k]
            for l in range(1, k + 1):
                j = owner[l]
                row[l] = diag if j == i else values.get((i, j), 0.0)
            row[0] = 1.0 - sum(row[1:])
            assert row[0] > 0.0
        rows.append(row)
    return text, tokens, rows


def write_attn(path, text, tokens, rows):
    n = len(tokens)
    doc_id = hashlib.sha256(text.encode("utf-8")).digest()
    with open(path, "wb") as f:
        f.write(b"ATTN")
        f.write(struct.pack("<HIHB", 1, n, 27, 0))  # version, N, layer, mean
        for row in rows:
            f.write(struct.pack("<%df" % n, *row))
        for (a, b, special) in tokens:
            f.write(struct.pack("<IIB", a, b, 1 if special else 0))
        f.write(doc_id)
    return doc_id.hex()


def text_hash(s):
    return hashlib.sha256(unicodedata.normalize("NFC", s).encode("utf-8")).hexdigest()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    nli_lines = []
    manifest = {}
    for name, case in CASES.items():
        text, tokens, rows = build(case)
        (OUT / f"{name}.txt").write_text(text + "\n", encoding="utf-8")
        doc_id = write_attn(OUT / f"{name}.attn", text, tokens, rows)
        sentences = case["sentences"]
        for p in range(len(sentences)):
            for h in range(len(sentences)):
                if p == h and (p, h) not in case["nli"]:
                    continue
                probs = case["nli"].get((p, h), NEUTRAL)
                nli_lines.append({"p_hash": text_hash(sentences[p]),
                                  "h_hash": text_hash(sentences[h]),
                                  "model_id": "fixture", "probs": probs,
                                  "premise": sentences[p],
                                  "hypothesis": sentences[h]})
        manifest[name] = {
            "doc_id": doc_id, "target": case["target"],
            "sentence_values": [[i, j, v] for (i, j), v in sorted(case["values"].items())],
        }
    with open(OUT / "nli_fixture.jsonl", "w", encoding="utf-8") as f:
        for line in nli_lines:
            f.write(json.dumps(line, ensure_ascii=False) + "\n")
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
