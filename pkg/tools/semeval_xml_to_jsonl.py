#!/usr/bin/env python3
"""Convert a SemEval-2014 Task 4 XML file into rwlab's JSONL format.

Tokens come from a word/punctuation regex with character offsets, so each
aspect's ``from``/``to`` offsets map onto the tokens they overlap.  Aspects
labelled ``conflict`` are dropped (the three-way label set has no slot for
them); a sentence left without aspects is kept as an aspect-free record.

    python tools/semeval_xml_to_jsonl.py Laptop_Train_v2.xml laptop_train.jsonl
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

logger = logging.getLogger("semeval_xml_to_jsonl")

TOKEN_RE = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]", re.UNICODE)
LABELS = {"positive", "negative", "neutral"}


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(0).lower(), m.start(), m.end()) for m in TOKEN_RE.finditer(text)]


def convert_sentence(node: ET.Element) -> tuple[list[dict], int]:
    """Records for one <sentence>; also returns how many conflict aspects were dropped."""
    sid = node.get("id")
    text = node.findtext("text") or ""
    toks = tokenize_with_offsets(text)
    words = [t for t, _, _ in toks]
    records, dropped = [], 0
    for asp in node.iter("aspectTerm"):
        polarity = asp.get("polarity")
        if polarity not in LABELS:
            dropped += 1
            continue
        start, end = int(asp.get("from")), int(asp.get("to"))
        idx = [i for i, (_, a, b) in enumerate(toks) if a < end and b > start]
        if not idx:
            raise ValueError(f"sentence {sid}: aspect {asp.get('term')!r} at [{start},{end}) covers no token")
        records.append(
            {
                "sentence_id": sid,
                "text": words,
                "aspect_term": words[idx[0] : idx[-1] + 1],
                "aspect_span": [idx[0], idx[-1] + 1],
                "label": polarity,
            }
        )
    if not records:
        records.append({"sentence_id": sid, "text": words, "aspect_term": [], "aspect_span": None, "label": None})
    return records, dropped


def convert(src: Path, dst: Path) -> dict:
    root = ET.parse(src).getroot()
    n_sent = n_rec = n_drop = 0
    with open(dst, "w", encoding="utf-8", newline="\n") as fh:
        for node in root.iter("sentence"):
            records, dropped = convert_sentence(node)
            n_sent += 1
            n_drop += dropped
            for rec in records:
                n_rec += rec["label"] is not None
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return {"sentences": n_sent, "aspects": n_rec, "conflict_dropped": n_drop}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("xml", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        summary = convert(args.xml, args.out)
    except (OSError, ET.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logger.info("%s: %d sentences, %d aspects, %d conflict aspects dropped", args.out, *summary.values())
    return 0


if __name__ == "__main__":
    sys.exit(main())
