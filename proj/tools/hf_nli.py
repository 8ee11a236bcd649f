#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The claimscope Authors
"""Classify premise/hypothesis pairs with a sequence-classification NLI model.

Reads JSON lines {"premise", "hypothesis"} on stdin and writes one
{"probs": [entailment, neutral, contradiction]} line per input.
"""

import argparse
import json
import sys


def label_order(id2label):
    order = {}
    for idx, name in id2label.items():
        key = name.lower()
        if key.startswith("entail"):
            order["e"] = int(idx)
        elif key.startswith("neutral"):
            order["n"] = int(idx)
        elif key.startswith("contra"):
            order["c"] = int(idx)
    if set(order) != {"e", "n", "c"}:
        raise ValueError(f"cannot map labels {id2label}")
    return order["e"], order["n"], order["c"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", required=True)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--batch-size", type=int, default=16)
    args = ap.parse_args()

    pairs = [json.loads(line) for line in sys.stdin if line.strip()]

    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    torch.use_deterministic_algorithms(True, warn_only=True)
    tok = AutoTokenizer.from_pretrained(args.model)
    model = AutoModelForSequenceClassification.from_pretrained(args.model)
    model.to(args.device).eval()
    e, n, c = label_order(model.config.id2label)

    out = sys.stdout
    for start in range(0, len(pairs), args.batch_size):
        batch = pairs[start:start + args.batch_size]
        enc = tok([p["premise"] for p in batch], [p["hypothesis"] for p in batch],
                  padding=True, truncation=True, return_tensors="pt").to(args.device)
        with torch.no_grad():
            probs = torch.softmax(model(**enc).logits.float(), dim=-1).cpu().tolist()
        for row in probs:
            out.write(json.dumps({"probs": [row[e], row[n], row[c]]}) + "\n")
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
