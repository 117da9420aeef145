from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pytest

from rwlab.corpus import AspectExample, Corpus, Polarity

FIXTURE_12 = Path(str(resources.files("rwlab") / "data" / "fixture_12.jsonl"))


def record(sid, text, term, label):
    toks = text.lower().split()
    if term is None:
        return {"sentence_id": sid, "text": toks, "aspect_term": [], "aspect_span": None, "label": None}
    t = term.split()
    start = next(i for i in range(len(toks)) if toks[i : i + len(t)] == t)
    return {"sentence_id": sid, "text": toks, "aspect_term": t, "aspect_span": [start, start + len(t)], "label": label}


def write_jsonl(path: Path, records) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def make_corpus(sentences) -> Corpus:
    """``sentences``: list of (text, [(term, label), ...])."""
    examples = []
    for k, (text, aspects) in enumerate(sentences):
        for term, label in aspects:
            r = record(f"s{k:03d}", text, term, label)
            examples.append(
                AspectExample(
                    len(examples), r["sentence_id"], tuple(r["text"]), tuple(r["aspect_term"]),
                    tuple(r["aspect_span"]), Polarity(label),
                )
            )
    return Corpus.from_examples(examples)


@pytest.fixture
def fixture_12() -> Path:
    return FIXTURE_12


@pytest.fixture
def review_records():
    """Three review sentences with five aspect records; only the last sentence is contrastive."""
    s1 = "The screen is good ."
    s2 = "The screen is good and also the battery ."
    s3 = "The screen is good but not the battery ."
    return [
        record("t1", s1, "screen", "positive"),
        record("t2", s2, "screen", "positive"),
        record("t2", s2, "battery", "positive"),
        record("t3", s3, "screen", "positive"),
        record("t3", s3, "battery", "negative"),
    ]
