"""Aspect-sentiment data model, JSONL ingestion and dataset statistics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    @property
    def index(self) -> int:
        return _POLARITY_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "Polarity":
        return POLARITIES[i]


# Iteration order doubles as the argmax tie-break order.
POLARITIES: tuple[Polarity, ...] = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)
_POLARITY_INDEX = {p: i for i, p in enumerate(POLARITIES)}
N_CLASSES = len(POLARITIES)


class CorpusFormatError(ValueError):
    """A dataset line could not be parsed."""


class CorpusValidationError(ValueError):
    """A parsed record violates the example invariants."""


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class AspectExample:
    example_id: int
    sentence_id: str
    text: tuple[str, ...]
    aspect_term: tuple[str, ...]
    aspect_span: tuple[int, int]
    label: Polarity

    def __post_init__(self):
        start, end = self.aspect_span
        if not 0 <= start < end <= len(self.text):
            raise CorpusValidationError(
                f"example {self.example_id} (sentence {self.sentence_id!r}): "
                f"aspect_span {list(self.aspect_span)} out of bounds for {len(self.text)} tokens"
            )
        if tuple(self.text[start:end]) != tuple(self.aspect_term):
            raise CorpusValidationError(
                f"example {self.example_id} (sentence {self.sentence_id!r}): "
                f"text{list(self.aspect_span)} = {list(self.text[start:end])} "
                f"does not match aspect_term {list(self.aspect_term)}"
            )


@dataclass(frozen=True)
class Corpus:
    examples: tuple[AspectExample, ...]
    sentence_ids: tuple[str, ...]
    sentence_index: dict[str, frozenset[int]] = field(compare=False)
    contrastive_flags: dict[str, bool] = field(compare=False)
    # Aspect-free sentences keep their text here; they never produce examples.
    sentence_texts: dict[str, tuple[str, ...]] = field(compare=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)

    @classmethod
    def from_examples(
        cls,
        examples: Iterable[AspectExample],
        extra_sentences: dict[str, tuple[str, ...]] | None = None,
        renumber: bool = False,
    ) -> "Corpus":
        """Build a corpus; sentence order follows first appearance.

        ``extra_sentences`` lists aspect-free sentences (id -> tokens); they
        are ordered before the example-bearing sentences.
        """
        examples = list(examples)
        if renumber:
            examples = [
                AspectExample(i, e.sentence_id, e.text, e.aspect_term, e.aspect_span, e.label)
                for i, e in enumerate(examples)
            ]
        if len({e.example_id for e in examples}) != len(examples):
            raise CorpusValidationError("duplicate example_id")
        texts = dict(extra_sentences or {})
        order = dict.fromkeys(texts)
        order.update(dict.fromkeys(e.sentence_id for e in examples))
        return _assemble(examples, list(order), texts)

    def example_contrastive_mask(self) -> list[bool]:
        return [self.contrastive_flags[e.sentence_id] for e in self.examples]

    def labels(self) -> list[int]:
        return [e.label.index for e in self.examples]

    def subset(self, keep_sentence) -> "Corpus":
        """Corpus restricted to sentences for which ``keep_sentence(sid)`` holds."""
        order = [s for s in self.sentence_ids if keep_sentence(s)]
        kept = [e for e in self.examples if keep_sentence(e.sentence_id)]
        texts = {s: self.sentence_texts[s] for s in order if s in self.sentence_texts}
        return _assemble(kept, order, texts)

    def contrastive_only(self) -> "Corpus":
        return self.subset(lambda s: self.contrastive_flags[s])


def detect_contrastive(corpus: Corpus) -> dict[str, bool]:
    """Map each sentence id to whether its aspects carry two or more distinct labels."""
    by_id = {e.example_id: e for e in corpus.examples}
    return {
        sid: len({by_id[i].label for i in corpus.sentence_index[sid]}) >= 2
        for sid in corpus.sentence_ids
    }


def _parse_record(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise CorpusFormatError(f"line {lineno}: expected a JSON object")
    for key in ("sentence_id", "text", "aspect_term", "aspect_span", "label"):
        if key not in rec:
            raise CorpusFormatError(f"line {lineno}: missing field {key!r}")
    if not isinstance(rec["text"], list) or not all(isinstance(t, str) for t in rec["text"]):
        raise CorpusFormatError(f"line {lineno}: 'text' must be a list of strings")
    if not isinstance(rec["aspect_term"], list):
        raise CorpusFormatError(f"line {lineno}: 'aspect_term' must be a list of strings")
    if rec["label"] is not None and rec["label"] not in {p.value for p in POLARITIES}:
        raise CorpusFormatError(f"line {lineno}: unknown label {rec['label']!r}")
    span = rec["aspect_span"]
    if span is not None and (
        not isinstance(span, list) or len(span) != 2 or not all(isinstance(v, int) for v in span)
    ):
        raise CorpusFormatError(f"line {lineno}: 'aspect_span' must be [start, end] or null")
    if (span is None) != (rec["label"] is None):
        raise CorpusFormatError(f"line {lineno}: aspect_span and label must both be null or both set")
    return rec


def load_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Read a JSONL dataset; example ids are assigned in file order."""
    if format != "jsonl":
        raise ValueError(f"unsupported format {format!r}")
    examples: list[AspectExample] = []
    aspect_free: dict[str, tuple[str, ...]] = {}
    order: dict[str, None] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = _parse_record(line, lineno)
            sid = str(rec["sentence_id"])
            text = tuple(t.lower() for t in rec["text"])
            order.setdefault(sid)
            if rec["label"] is None:
                aspect_free.setdefault(sid, text)
                continue
            examples.append(
                AspectExample(
                    example_id=len(examples),
                    sentence_id=sid,
                    text=text,
                    aspect_term=tuple(t.lower() for t in rec["aspect_term"]),
                    aspect_span=(rec["aspect_span"][0], rec["aspect_span"][1]),
                    label=Polarity(rec["label"]),
                )
            )
    return _assemble(examples, list(order), aspect_free)


def _assemble(
    examples: list[AspectExample], order: list[str], texts: dict[str, tuple[str, ...]]
) -> Corpus:
    buckets: dict[str, set[int]] = {s: set() for s in order}
    for ex in examples:
        buckets[ex.sentence_id].add(ex.example_id)
        texts.setdefault(ex.sentence_id, ex.text)
    index = {s: frozenset(buckets[s]) for s in order}
    corpus = Corpus(tuple(examples), tuple(order), index, {}, texts)
    corpus.contrastive_flags.update(detect_contrastive(corpus))
    return corpus


def example_record(ex: AspectExample) -> dict:
    return {
        "sentence_id": ex.sentence_id,
        "text": list(ex.text),
        "aspect_term": list(ex.aspect_term),
        "aspect_span": list(ex.aspect_span),
        "label": ex.label.value,
    }


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as JSONL, one record per example, aspect-free sentences in place."""
    by_sentence: dict[str, list[AspectExample]] = {}
    for ex in corpus.examples:
        by_sentence.setdefault(ex.sentence_id, []).append(ex)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in corpus.sentence_ids:
            members = sorted(by_sentence.get(sid, []), key=lambda e: e.example_id)
            if not members:
                rec = {
                    "sentence_id": sid,
                    "text": list(corpus.sentence_texts.get(sid, ())),
                    "aspect_term": [],
                    "aspect_span": None,
                    "label": None,
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            for ex in members:
                fh.write(json.dumps(example_record(ex), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    n_aspects: int
    n_positive: int
    n_negative: int
    n_neutral: int
    n_sentences_with_aspect: int
    n_contrastive_sentences: int
    pct_contrastive: float
    warning: str | None = None

    def to_json(self) -> dict:
        out = {
            "n_sentences": self.n_sentences,
            "n_aspects": self.n_aspects,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "n_neutral": self.n_neutral,
            "n_sentences_with_aspect": self.n_sentences_with_aspect,
            "n_contrastive_sentences": self.n_contrastive_sentences,
            "pct_contrastive": self.pct_contrastive,
        }
        if self.warning:
            out["warning"] = self.warning
        return out


def compute_stats(corpus: Corpus) -> CorpusStats:
    counts = {p: 0 for p in POLARITIES}
    for ex in corpus.examples:
        counts[ex.label] += 1
    with_aspect = sum(1 for s in corpus.sentence_ids if corpus.sentence_index[s])
    n_contra = sum(1 for s in corpus.sentence_ids if corpus.contrastive_flags[s])
    warning = None
    if with_aspect == 0:
        pct = 0.0
        warning = "no sentence carries an aspect; pct_contrastive reported as 0"
        logger.warning(warning)
    else:
        pct = 100.0 * n_contra / with_aspect
    return CorpusStats(
        n_sentences=len(corpus.sentence_ids),
        n_aspects=len(corpus.examples),
        n_positive=counts[Polarity.POSITIVE],
        n_negative=counts[Polarity.NEGATIVE],
        n_neutral=counts[Polarity.NEUTRAL],
        n_sentences_with_aspect=with_aspect,
        n_contrastive_sentences=n_contra,
        pct_contrastive=pct,
        warning=warning,
    )


def holdout_validation(corpus: Corpus, validation_size: int) -> tuple[Corpus, Corpus]:
    """Split off the last sentences (by sentence_id order) holding ~``validation_size`` examples.

    Whole sentences move together, so the held-out split may overshoot by
    at most one sentence's aspects.
    """
    if validation_size <= 0:
        return corpus, Corpus.from_examples([])
    if validation_size >= len(corpus):
        raise ValueError(f"validation_size {validation_size} must be below training size {len(corpus)}")
    held: set[str] = set()
    n = 0
    for sid in sorted((s for s in corpus.sentence_ids if corpus.sentence_index[s]), reverse=True):
        if n >= validation_size:
            break
        held.add(sid)
        n += len(corpus.sentence_index[sid])
    train = corpus.subset(lambda s: s not in held)
    valid = corpus.subset(lambda s: s in held)
    return _renumbered(train), _renumbered(valid)


def _renumbered(corpus: Corpus) -> Corpus:
    examples = [
        AspectExample(i, e.sentence_id, e.text, e.aspect_term, e.aspect_span, e.label)
        for i, e in enumerate(corpus.examples)
    ]
    return _assemble(examples, list(corpus.sentence_ids), dict(corpus.sentence_texts))


def concat(corpora: Sequence[Corpus]) -> Corpus:
    return Corpus.from_examples([e for c in corpora for e in c.examples], renumber=True)
