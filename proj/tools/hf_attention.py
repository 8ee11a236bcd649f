#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The claimscope Authors
"""Extract one layer of causal self-attention and write a claimscope .attn file.

Exit codes: 0 success, 2 usage or model failure, 3 document longer than
--max-tokens.
"""

import argparse
import hashlib
import struct
import sys
import unicodedata


def normalize(text):
    return unicodedata.normalize("NFC", text).strip()


def parse_reduction(value):
    if value in ("mean", "max"):
        return value, (0 if value == "mean" else 1)
    if value.startswith("single:"):
        head = int(value.split(":", 1)[1])
        if not 0 <= head <= 253:
            raise ValueError("head index must be in [0, 253]")
        return value, 2 + head
    raise ValueError(f"unknown head reduction {value!r}")


def write_attn(path, matrix, offsets, special, layer, reduction_byte, doc_id):
    n = len(offsets)
    with open(path, "wb") as f:
        f.write(b"ATTN")
        f.write(struct.pack("<HIHB", 1, n, layer, reduction_byte))
        f.write(matrix.astype("<f4").tobytes(order="C"))
        for (start, end), sp in zip(offsets, special):
            f.write(struct.pack("<IIB", start, end, 1 if sp else 0))
        f.write(doc_id)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", required=True)
    ap.add_argument("--layer", type=int, default=-1)
    ap.add_argument("--reduction", default="mean")
    ap.add_argument("--max-tokens", type=int, default=4096)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--input", required=True)
    ap.add_argument("--output", required=True)
    args = ap.parse_args()

    try:
        _, reduction_byte = parse_reduction(args.reduction)
    except ValueError as e:
        print(e, file=sys.stderr)
        return 2

    with open(args.input, encoding="utf-8") as f:
        text = normalize(f.read())
    doc_id = hashlib.sha256(text.encode("utf-8")).digest()

    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    torch.manual_seed(0)
    torch.use_deterministic_algorithms(True, warn_only=True)

    tok = AutoTokenizer.from_pretrained(args.model)
    enc = tok(text, return_offsets_mapping=True, return_special_tokens_mask=True,
              add_special_tokens=True, return_tensors="pt")
    n = enc["input_ids"].shape[1]
    if n > args.max_tokens:
        print(f"document has {n} tokens, limit is {args.max_tokens}", file=sys.stderr)
        return 3

    model = AutoModelForCausalLM.from_pretrained(
        args.model, attn_implementation="eager", torch_dtype=torch.float32)
    model.to(args.device).eval()

    with torch.no_grad():
        out = model(input_ids=enc["input_ids"].to(args.device),
                    attention_mask=enc["attention_mask"].to(args.device),
                    output_attentions=True)
    layers = out.attentions
    layer = args.layer if args.layer >= 0 else len(layers) + args.layer
    if not 0 <= layer < len(layers):
        print(f"layer {args.layer} out of range for {len(layers)} layers", file=sys.stderr)
        return 2
    heads = layers[layer][0].float()  # [H, N, N]
    if reduction_byte == 0:
        att = heads.mean(dim=0)
    elif reduction_byte == 1:
        att = heads.max(dim=0).values
    else:
        h = reduction_byte - 2
        if h >= heads.shape[0]:
            print(f"head {h} out of range for {heads.shape[0]} heads", file=sys.stderr)
            return 2
        att = heads[h]
    att = torch.tril(att)
    matrix = att.cpu().numpy()

    offsets = [tuple(int(x) for x in pair) for pair in enc["offset_mapping"][0].tolist()]
    special = [bool(x) for x in enc["special_tokens_mask"][0].tolist()]
    write_attn(args.output, matrix, offsets, special, layer, reduction_byte, doc_id)
    return 0


if __name__ == "__main__":
    sys.exit(main())
