"""Template-based synthetic ASC corpora with known aspect-level ground truth.

Every aspect gets exactly one polarity-lexicon word within three tokens of
its span, and that word alone decides the aspect's label.  Clauses are
joined by three-token joiners so no aspect ever sees another clause's
polarity word.  Sentences may end with a tone phrase ("overall i love it")
placed at least four tokens past the last aspect: a sentence-level cue that
agrees with every aspect of a non-contrastive sentence but with only one
aspect of a contrastive sentence.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass

from .corpus import POLARITIES, AspectExample, Corpus, Polarity

WINDOW = 3

_POLARITY_SEEDS = {
    Polarity.POSITIVE: "good great excellent amazing fantastic superb lovely wonderful perfect awesome".split(),
    Polarity.NEGATIVE: "bad terrible awful poor horrible lousy disappointing weak flimsy dreadful".split(),
    Polarity.NEUTRAL: "ok average standard typical ordinary normal adequate acceptable plain regular".split(),
}
_TONE_SEEDS = {
    Polarity.POSITIVE: "love adore recommend enjoy".split(),
    Polarity.NEGATIVE: "hate regret dislike resent".split(),
    Polarity.NEUTRAL: "tolerate accept use own".split(),
}
_ASPECT_SEEDS = [
    "screen", "battery", "keyboard", "price", "service", "food", "staff", "design",
    "speakers", "trackpad", "menu", "wine", "dessert", "ambience", "display", "charger",
    ("battery", "life"), ("customer", "service"), ("operating", "system"), ("wait", "time"),
]
_DETERMINERS = ["the", "its", "this", "that"]
_VERBS = ["is", "was", "looks", "feels", "seems"]
_INTENSIFIERS = ["very", "really", "quite", "pretty", "rather"]
_FILLER_ADJECTIVES = ["new", "main", "whole", "little"]
_PLAIN_JOINERS = ["and", "plus", "also"]
_CONTRAST_JOINERS = ["but", "whereas", "while", "yet", "although"]


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_sentences: int = 1000
    contrastive_rate: float = 0.12
    n_positive_words: int = 10
    n_negative_words: int = 10
    n_neutral_words: int = 10
    n_aspect_terms: int = 60
    seed: int = 7
    n_valid_examples: int = 150
    n_test_sentences: int = 600
    n_contrastive_test: int = 80
    tone_rate: float = 0.9
    n_tone_words: int = 4
    polarity_probs: tuple[float, float, float] = (0.55, 0.27, 0.18)

    def __post_init__(self):
        if not 0.0 <= self.contrastive_rate <= 1.0:
            raise SyntheticSpecError(f"contrastive_rate {self.contrastive_rate} outside [0, 1]")
        if not 0.0 <= self.tone_rate <= 1.0:
            raise SyntheticSpecError(f"tone_rate {self.tone_rate} outside [0, 1]")
        for name in (
            "n_sentences", "n_positive_words", "n_negative_words", "n_neutral_words",
            "n_aspect_terms", "n_valid_examples", "n_test_sentences", "n_tone_words",
        ):
            if getattr(self, name) < 1:
                raise SyntheticSpecError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_contrastive_test < 0:
            raise SyntheticSpecError("n_contrastive_test must be >= 0")
        if len(self.polarity_probs) != 3 or min(self.polarity_probs) < 0 or sum(self.polarity_probs) <= 0:
            raise SyntheticSpecError(f"bad polarity_probs {self.polarity_probs}")
        if self.n_aspect_terms < 2 and self.contrastive_rate > 0:
            raise SyntheticSpecError("contrastive sentences need at least 2 aspect terms")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "polarity_probs" in d:
            d["polarity_probs"] = tuple(d["polarity_probs"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["polarity_probs"] = list(self.polarity_probs)
        return d


def _lexicon(seeds: list[str], size: int, stem: str) -> list[str]:
    words = list(seeds[:size])
    words += [f"{stem}{i}" for i in range(size - len(words))]
    return words


class _Builder:
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        sizes = {
            Polarity.POSITIVE: spec.n_positive_words,
            Polarity.NEGATIVE: spec.n_negative_words,
            Polarity.NEUTRAL: spec.n_neutral_words,
        }
        stems = {Polarity.POSITIVE: "posw", Polarity.NEGATIVE: "negw", Polarity.NEUTRAL: "neuw"}
        self.lexicon = {p: _lexicon(_POLARITY_SEEDS[p], sizes[p], stems[p]) for p in POLARITIES}
        self.tones = {p: _lexicon(_TONE_SEEDS[p], spec.n_tone_words, f"{stems[p]}tone") for p in POLARITIES}
        seeds = [a if isinstance(a, tuple) else (a,) for a in _ASPECT_SEEDS]
        self.aspects = seeds[: spec.n_aspect_terms] + [
            (f"part{i}",) for i in range(spec.n_aspect_terms - len(seeds))
        ]

    def polarity(self) -> Polarity:
        return self.rng.choices(POLARITIES, weights=self.spec.polarity_probs)[0]

    def clause(self, aspect: tuple[str, ...], label: Polarity, with_det: bool) -> tuple[list[str], int]:
        """Tokens for one clause and the aspect's offset inside it."""
        rng = self.rng
        word = rng.choice(self.lexicon[label])
        det = [rng.choice(_DETERMINERS)] if with_det else []
        form = rng.randrange(4)
        if form == 0:
            toks = det + list(aspect) + [rng.choice(_VERBS), word]
            return toks, len(det)
        if form == 1:
            toks = det + list(aspect) + [rng.choice(_VERBS), rng.choice(_INTENSIFIERS), word]
            return toks, len(det)
        if form == 2:
            toks = det + [word] + list(aspect)
            return toks, len(det) + 1
        toks = det + [word, rng.choice(_FILLER_ADJECTIVES)] + list(aspect)
        return toks, len(det) + 2

    def sentence(self, sid: str, labels: list[Polarity], joiners: list[str], tone: Polarity | None):
        rng = self.rng
        aspects = rng.sample(self.aspects, len(labels))
        tokens: list[str] = []
        spans: list[tuple[int, int]] = []
        for k, (aspect, label) in enumerate(zip(aspects, labels)):
            if k:
                # three joiner tokens keep neighbouring clauses outside each window
                tokens += [",", rng.choice(joiners), rng.choice(_DETERMINERS)]
            toks, off = self.clause(aspect, label, with_det=(k == 0))
            spans.append((len(tokens) + off, len(tokens) + off + len(aspect)))
            tokens += toks
        if tone is not None:
            tokens += [".", "overall", "i", rng.choice(self.tones[tone]), "it"]
        return [
            (sid, tuple(tokens), aspect, span, label)
            for aspect, span, label in zip(aspects, spans, labels)
        ]

    def plain(self, sid: str):
        label = self.polarity()
        n_aspects = self.rng.choice((1, 2))
        tone = label if self.rng.random() < self.spec.tone_rate else None
        return self.sentence(sid, [label] * n_aspects, _PLAIN_JOINERS, tone)

    def contrastive(self, sid: str):
        first = self.polarity()
        second = self.rng.choice([p for p in POLARITIES if p != first])
        labels = [first, second]
        self.rng.shuffle(labels)
        tone = self.rng.choice(labels) if self.rng.random() < self.spec.tone_rate else None
        return self.sentence(sid, labels, _CONTRAST_JOINERS, tone)

    def split(self, prefix: str, n_sentences: int, n_contrastive: int) -> list[tuple]:
        kinds = [True] * n_contrastive + [False] * (n_sentences - n_contrastive)
        self.rng.shuffle(kinds)
        rows = []
        for i, is_contra in enumerate(kinds):
            sid = f"{prefix}-{i:05d}"
            rows += self.contrastive(sid) if is_contra else self.plain(sid)
        return rows


def _to_corpus(rows: list[tuple]) -> Corpus:
    examples = [
        AspectExample(i, sid, text, aspect, span, label)
        for i, (sid, text, aspect, span, label) in enumerate(rows)
    ]
    return Corpus.from_examples(examples)


def _n_contrastive(rate: float, n: int) -> int:
    return int(round(rate * n))


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, Corpus, Corpus, Corpus]:
    """Return (train, valid, test_full, test_contrastive), a pure function of ``spec``."""
    b = _Builder(spec)
    rate = spec.contrastive_rate
    train = b.split("train", spec.n_sentences, _n_contrastive(rate, spec.n_sentences))

    # Roughly 1.5 aspects per plain sentence; grow until the example budget is met.
    n_valid = max(1, int(spec.n_valid_examples / 1.6))
    while True:
        valid = b.split("valid", n_valid, _n_contrastive(rate, n_valid))
        if len(valid) >= spec.n_valid_examples:
            break
        n_valid += 8
    test = b.split("test", spec.n_test_sentences, _n_contrastive(rate, spec.n_test_sentences))

    label_sets: dict[str, set] = {}
    for r in test:
        label_sets.setdefault(r[0], set()).add(r[4])
    test_c = [r for r in test if len(label_sets[r[0]]) >= 2]
    if rate > 0:
        have = len({r[0] for r in test_c})
        extra = max(0, spec.n_contrastive_test - have)
        test_c += b.split("ctest", extra, extra)
    return _to_corpus(train), _to_corpus(valid), _to_corpus(test), _to_corpus(test_c)
