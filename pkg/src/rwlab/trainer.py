"""Weighted mini-batch training with epoch-end adaptive re-weighting and early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import jsonio
from .corpus import Corpus
from .evaluation import metrics_from_predictions
from .model import (
    Mode,
    Model,
    NumericalError,
    OptimizerState,
    apply_update,
    batch_forward,
    batch_gradient,
    save_checkpoint,
)
from .weighting import (
    SchemeConfig,
    WeightState,
    adjust_weights,
    batch_weights,
    clamp_rate,
    init_weights,
    log_ratio,
    weighted_error_rate,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 12
    validation_size: int = 150
    patience: int = 3
    seed: int = 0
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    hash_bits: int = 18
    hash_seed: int = 0
    mode: Mode = Mode.ASPECT_AWARE
    learning_rate: float = 0.003
    n_runs: int = 10

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1 or self.n_runs < 1:
            raise ValueError("batch_size, max_epochs, patience and n_runs must all be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "validation_size": self.validation_size,
            "patience": self.patience,
            "seed": self.seed,
            "scheme": self.scheme.to_dict(),
            "hash_bits": self.hash_bits,
            "hash_seed": self.hash_seed,
            "mode": self.mode.value,
            "learning_rate": self.learning_rate,
            "n_runs": self.n_runs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "scheme" in d:
            d["scheme"] = SchemeConfig.from_dict(d["scheme"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_macro_f1: float
    r: float
    alpha: float
    clamped: bool
    n_incorrect: int
    n_incorrect_contrastive: int
    flagged_mass_before: float
    flagged_mass_after: float
    weight_rescale: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainRun:
    config: TrainConfig
    epochs: list[EpochRecord]
    best_epoch: int
    model: Model
    weight_state: WeightState
    # (epoch, weights, incorrect) snapshots; epoch 0 holds the initial weights
    trajectory: list[tuple[int, np.ndarray, np.ndarray]]
    contrastive_mask: np.ndarray
    example_ids: np.ndarray

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "best_epoch": self.best_epoch,
            "epochs": [e.to_json() for e in self.epochs],
            "weight_rescale_total": self.weight_state.rescale_total,
        }


def batch_total_loss(w_batch: Sequence[float], l_batch: Sequence[float]) -> float:
    """Weighted mean sum(w * l) / sum(w)."""
    w = np.asarray(w_batch, dtype=np.float64)
    l = np.asarray(l_batch, dtype=np.float64)
    if w.shape != l.shape:
        raise ValueError("w_batch and l_batch must have equal length")
    total = w.sum()
    if not total > 0:
        raise ValueError("batch weights must have a positive sum")
    return float((w / total) @ l)


def epoch_end_predictions(model: Model, corpus_train: Corpus) -> np.ndarray:
    """Argmax label index per example; ties go to the earlier polarity."""
    X = model.featurizer().matrix(corpus_train.examples, model.mode)
    return model.predict(X)


def train(
    corpus_train: Corpus,
    corpus_valid: Corpus,
    config: TrainConfig,
    initial_weights: Sequence[float] | None = None,
    on_epoch_end: Callable[[EpochRecord, Model], None] | None = None,
) -> TrainRun:
    """Run the full training loop and return the early-stopped checkpoint.

    ``initial_weights`` overrides the scheme's initialisation; it exists to
    exercise the scale invariance of the batch loss.  ``on_epoch_end`` sees
    each epoch's record and the live model (do not mutate it).
    """
    if len(corpus_train) == 0 or len(corpus_valid) == 0:
        raise ValueError("training and validation corpora must be non-empty")
    n = len(corpus_train)
    model = Model.zeros(config.hash_bits, config.mode, config.hash_seed)
    opt = OptimizerState.for_model(model, config.learning_rate)
    featurizer = model.featurizer()
    X = featurizer.matrix(corpus_train.examples, config.mode)
    X_valid = featurizer.matrix(corpus_valid.examples, config.mode)
    y = np.array(corpus_train.labels(), dtype=np.int64)
    y_valid = np.array(corpus_valid.labels(), dtype=np.int64)
    contrastive = np.array(corpus_train.example_contrastive_mask(), dtype=bool)

    scheme = config.scheme
    if initial_weights is None:
        state = init_weights(n, scheme, contrastive)
    else:
        if len(initial_weights) != n:
            raise ValueError("initial_weights length must equal the training set size")
        state = WeightState.from_weights(initial_weights)
    target = np.ones(n, dtype=bool) if scheme.scheme == "arw_all" else contrastive

    rng = np.random.default_rng(config.seed)
    incorrect0 = model.predict(X) != y
    trajectory = [(0, state.weights.copy(), incorrect0)]
    epochs: list[EpochRecord] = []
    best_epoch, best_metric, best_model = 0, -math.inf, model.copy()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            losses, P = batch_forward(model, Xb, yb)
            wb = batch_weights(scheme, state.relative[idx], P[np.arange(len(idx)), yb])
            total = wb.sum()
            coef = wb / total if total > 0 else np.zeros_like(wb)
            batch_loss = float(coef @ losses)
            if not math.isfinite(batch_loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
            columns, grad_w, grad_b = batch_gradient(Xb, P, yb, coef)
            try:
                apply_update(model, opt, grad_w, grad_b, columns)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from None
            loss_sum += batch_loss
            n_batches += 1

        pred = model.predict(X)
        incorrect = pred != y
        flagged = incorrect & target
        r = weighted_error_rate(state.relative, incorrect, target)
        alpha = log_ratio(r, scheme.epsilon)
        clamped = clamp_rate(r, scheme.epsilon)[1]
        mass_before = float(state.relative[flagged].sum())
        rescale = 1.0
        if scheme.is_arw:
            adjust_weights(state, alpha, incorrect, target, r=r, epoch=epoch, clamped=clamped)
            rescale = state.epoch_log[-1].rescale
        mass_after = float(state.relative[flagged].sum()) / rescale

        val = metrics_from_predictions(y_valid, model.predict(X_valid), "valid")
        epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n_batches,
                val_accuracy=val.accuracy,
                val_macro_f1=val.macro_f1,
                r=r,
                alpha=alpha,
                clamped=clamped,
                n_incorrect=int(incorrect.sum()),
                n_incorrect_contrastive=int((incorrect & contrastive).sum()),
                flagged_mass_before=mass_before,
                flagged_mass_after=mass_after,
                weight_rescale=rescale,
            )
        )
        trajectory.append((epoch, state.weights.copy(), incorrect))
        logger.debug(
            "epoch %d loss %.4f val_mf1 %.4f r %.4f alpha %.4f", epoch, epochs[-1].train_loss, val.macro_f1, r, alpha
        )
        if on_epoch_end is not None:
            on_epoch_end(epochs[-1], model)
        if val.macro_f1 > best_metric:
            best_epoch, best_metric, best_model = epoch, val.macro_f1, model.copy()
        elif epoch - best_epoch >= config.patience:
            break

    return TrainRun(
        config=config,
        epochs=epochs,
        best_epoch=best_epoch,
        model=best_model,
        weight_state=state,
        trajectory=trajectory,
        contrastive_mask=contrastive,
        example_ids=np.array([e.example_id for e in corpus_train.examples]),
    )


def write_weight_trajectory(run: TrainRun, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "example_id", "weight", "incorrect", "contrastive"])
        for epoch, weights, incorrect in run.trajectory:
            for ex_id, wt, inc, con in zip(run.example_ids, weights, incorrect, run.contrastive_mask):
                w.writerow([epoch, int(ex_id), jsonio.fmt_float(float(wt)), int(inc), int(con)])


def write_run(run: TrainRun, out_dir: str | Path, extra: dict | None = None) -> Path:
    """Write run.json, model.bin and weights.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = run.to_json()
    if extra:
        doc.update(extra)
    jsonio.write_json(doc, out / "run.json")
    save_checkpoint(run.model, out / "model.bin")
    write_weight_trajectory(run, out / "weights.csv")
    return out
