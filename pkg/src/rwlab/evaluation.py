"""Accuracy / macro-F1 reports, incorrect-contrastive counts and multi-run aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import N_CLASSES, POLARITIES, Corpus
from .model import Mode, Model

SPLIT_FILTERS = ("all", "contrastive_only")


class EmptySplitError(ValueError):
    pass


@dataclass
class MetricReport:
    split: str
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]  # rows = gold, columns = predicted
    n_examples: int

    def to_json(self) -> dict:
        return {
            "split": self.split,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                p.value: {"precision": self.precision[i], "recall": self.recall[i], "f1": self.f1[i]}
                for i, p in enumerate(POLARITIES)
            },
            "confusion": self.confusion,
            "n_examples": self.n_examples,
        }


def confusion_matrix(gold: Sequence[int], pred: Sequence[int]) -> np.ndarray:
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def metrics_from_predictions(gold: Sequence[int], pred: Sequence[int], split: str = "full") -> MetricReport:
    """Per-class F1 is 0 when precision + recall is 0; macro-F1 always averages all three classes."""
    if len(gold) == 0:
        raise EmptySplitError(f"no examples in split {split!r}")
    cm = confusion_matrix(gold, pred)
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros(N_CLASSES), where=pred_tot > 0)
    recall = np.divide(tp, gold_tot, out=np.zeros(N_CLASSES), where=gold_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(N_CLASSES), where=denom > 0)
    n = int(cm.sum())
    return MetricReport(
        split=split,
        accuracy=float(tp.sum() / n),
        macro_f1=float(f1.mean()),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
        n_examples=n,
    )


def predict(model: Model, corpus: Corpus, mode: Mode | str | None = None) -> np.ndarray:
    X = model.featurizer().matrix(corpus.examples, mode or model.mode)
    return model.predict(X)


def evaluate(
    model: Model,
    corpus: Corpus,
    split_filter: str = "all",
    mode: Mode | str | None = None,
    split: str | None = None,
) -> MetricReport:
    """Score ``model`` on ``corpus``; ``mode`` overrides the featurization (the aspect-blind probe)."""
    if split_filter not in SPLIT_FILTERS:
        raise ValueError(f"split_filter must be one of {SPLIT_FILTERS}")
    if split_filter == "contrastive_only":
        corpus = corpus.contrastive_only()
    if len(corpus) == 0:
        raise EmptySplitError(f"split filter {split_filter!r} selects no examples")
    pred = predict(model, corpus, mode)
    name = split or ("contrastive" if split_filter == "contrastive_only" else "full")
    return metrics_from_predictions(corpus.labels(), pred, name)


def count_incorrect_contrastive(model: Model, corpus_train: Corpus) -> int:
    if len(corpus_train) == 0:
        return 0
    mask = np.array(corpus_train.example_contrastive_mask(), dtype=bool)
    if not mask.any():
        return 0
    pred = predict(model, corpus_train)
    gold = np.array(corpus_train.labels())
    return int(((pred != gold) & mask).sum())


@dataclass
class RunRecord:
    """One trained run plus its evaluation reports, keyed by split name."""

    scheme: str
    seed: int
    config_key: str
    reports: dict[str, MetricReport]
    incorrect_contrastive: int
    best_epoch: int = 0


@dataclass
class AggregateReport:
    n_runs: dict[str, int]
    # scheme -> split -> metric -> (mean, sample std)
    stats: dict[str, dict[str, dict[str, tuple[float, float]]]]
    incorrect_contrastive: dict[str, list[int]]
    scheme_order: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "n_runs": self.n_runs,
            "schemes": {
                scheme: {
                    split: {m: {"mean": mu, "std": sd} for m, (mu, sd) in metrics.items()}
                    for split, metrics in splits.items()
                }
                for scheme, splits in self.stats.items()
            },
            "incorrect_contrastive_train": self.incorrect_contrastive,
        }

    def to_csv(self, splits: Sequence[str] | None = None) -> str:
        """Flat rows (scheme, split, metric, mean, stddev); ``splits`` restricts which splits appear."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "split", "metric", "mean", "stddev"])
        for scheme in self.scheme_order:
            for split, metrics in self.stats[scheme].items():
                if splits is not None and split not in splits:
                    continue
                for metric, (mu, sd) in metrics.items():
                    w.writerow([scheme, split, metric, f"{mu:.17g}", f"{sd:.17g}"])
        return buf.getvalue()

    def render_table(self) -> str:
        """Text table with one block per scheme and one row per split, in percent."""
        rows = [f"{'':38s} {'Acc.':>7s} {'MF1':>7s}"]
        names = {"full": "on Full Test Set", "full_no_aspect": "on Full Test Set w/o aspect",
                 "contrastive": "on Contrastive Test Set", "contrastive_no_aspect": "on Contrastive Test Set w/o aspect"}
        for scheme in self.scheme_order:
            rows.append(f"{scheme} (n={self.n_runs[scheme]})")
            for split, metrics in self.stats[scheme].items():
                acc = metrics["accuracy"][0] * 100
                mf1 = metrics["macro_f1"][0] * 100
                rows.append(f"  {names.get(split, split):36s} {acc:7.2f} {mf1:7.2f}")
            counts = self.incorrect_contrastive.get(scheme)
            if counts:
                rows.append(f"  {'# incorrect contra. train (mean)':36s} {np.mean(counts):7.1f}")
        return "\n".join(rows) + "\n"


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    vals = [float(v) for v in values]
    mu = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mu, 0.0
    var = math.fsum((v - mu) ** 2 for v in vals) / (len(vals) - 1)
    return mu, math.sqrt(var)


def aggregate(runs: Iterable[RunRecord]) -> AggregateReport:
    runs = list(runs)
    if not runs:
        raise ValueError("aggregate needs at least one run")
    groups: dict[str, list[RunRecord]] = {}
    for run in runs:
        groups.setdefault(run.scheme, []).append(run)
    stats: dict[str, dict[str, dict[str, tuple[float, float]]]] = {}
    for scheme, members in groups.items():
        keys = {m.config_key for m in members}
        if len(keys) > 1:
            raise ValueError(f"scheme {scheme!r} mixes {len(keys)} different configs in one aggregate")
        # sort by seed so float sums do not depend on run order
        members.sort(key=lambda m: m.seed)
        splits: dict[str, dict[str, tuple[float, float]]] = {}
        for split in members[0].reports:
            splits[split] = {
                metric: _mean_std([getattr(m.reports[split], metric) for m in members])
                for metric in ("accuracy", "macro_f1")
            }
        stats[scheme] = splits
        groups[scheme] = members
    return AggregateReport(
        n_runs={s: len(m) for s, m in groups.items()},
        stats=stats,
        incorrect_contrastive={s: [m.incorrect_contrastive for m in ms] for s, ms in groups.items()},
        scheme_order=list(groups),
    )
