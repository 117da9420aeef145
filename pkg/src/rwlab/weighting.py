"""Example-weighting schemes: uniform, manual, focal and adaptive re-weighting (ARW).

Stored weights are kept as ``scale * relative`` where ``relative`` is the
initial vector divided by its maximum.  Training only ever reads the
relative part, so multiplying the initial weights by a constant changes
nothing downstream as long as the products are representable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCHEMES = ("uniform", "manual", "focal", "arw", "arw_all")
ARW_SCHEMES = ("arw", "arw_all")
CLAMP_DELTA = 1e-6
MAX_DYNAMIC_RANGE = 1e12


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "uniform"
    epsilon: float = -0.05
    gamma: float = 2.0
    initial_weighting: str = "uniform"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.initial_weighting not in ("uniform", "manual"):
            raise ValueError(f"unknown initial_weighting {self.initial_weighting!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be finite")

    @property
    def is_arw(self) -> bool:
        return self.scheme in ARW_SCHEMES

    @property
    def label(self) -> str:
        if self.scheme == "manual" or self.initial_weighting == "uniform":
            return self.scheme
        return f"{self.scheme}+manual_init"

    @classmethod
    def from_dict(cls, d: dict | str) -> "SchemeConfig":
        if isinstance(d, str):
            return cls(scheme=d)
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "initial_weighting": self.initial_weighting,
        }


@dataclass
class EpochWeightLog:
    epoch: int
    r: float
    alpha: float
    n_up: int
    n_down: int
    clamped: bool
    rescale: float = 1.0


@dataclass
class WeightState:
    relative: np.ndarray
    scale: float = 1.0
    epoch_log: list[EpochWeightLog] = field(default_factory=list)
    # product of every range-control rescale applied so far
    rescale_total: float = 1.0

    @classmethod
    def from_weights(cls, w: Sequence[float]) -> "WeightState":
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty vector")
        if not (np.isfinite(w).all() and (w > 0).all()):
            raise ValueError("weights must be positive and finite")
        top = float(w.max())
        return cls(relative=w / top, scale=top)

    @property
    def weights(self) -> np.ndarray:
        return self.scale * self.relative

    def __len__(self) -> int:
        return len(self.relative)


def manual_weights(contrastive_mask: Sequence[bool]) -> np.ndarray | None:
    """(n - C_c) for contrastive examples, C_c otherwise; None when degenerate."""
    mask = np.asarray(contrastive_mask, dtype=bool)
    n = len(mask)
    c = int(mask.sum())
    if c == 0 or c == n:
        return None
    return np.where(mask, float(n - c), float(c))


def init_weights(n: int, config: SchemeConfig, contrastive_mask: Sequence[bool]) -> WeightState:
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(contrastive_mask) != n:
        raise ValueError("contrastive_mask length must equal n")
    wants_manual = config.scheme == "manual" or (config.is_arw and config.initial_weighting == "manual")
    if wants_manual:
        w = manual_weights(contrastive_mask)
        if w is not None:
            return WeightState.from_weights(w)
        logger.warning("manual weighting degenerate (C_c in {0, n}); falling back to uniform")
    return WeightState.from_weights(np.full(n, 1.0 / n))


def batch_weights(config: SchemeConfig, w_batch: np.ndarray, p_true: np.ndarray) -> np.ndarray:
    if config.scheme == "focal":
        return np.power(1.0 - np.asarray(p_true, dtype=np.float64), config.gamma)
    return np.asarray(w_batch, dtype=np.float64)


def weighted_error_rate(w: np.ndarray, incorrect_mask: np.ndarray, target_mask: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64)
    flagged = np.asarray(incorrect_mask, dtype=bool) & np.asarray(target_mask, dtype=bool)
    return float(w[flagged].sum() / w.sum())


def clamp_rate(r: float, epsilon: float) -> tuple[float, bool]:
    lo, hi = epsilon + CLAMP_DELTA, 1.0 + epsilon - CLAMP_DELTA
    clamped = min(max(r, lo), hi)
    return clamped, clamped != r


def log_ratio(r: float, epsilon: float) -> float:
    """log((1 - r + eps) / (r - eps)), with r clamped so both terms stay positive."""
    rc, clamped = clamp_rate(r, epsilon)
    if clamped:
        logger.debug("clamped weighted error rate %r -> %r (epsilon=%r)", r, rc, epsilon)
    return math.log((1.0 - rc + epsilon) / (rc - epsilon))


def adjust_weights(
    state: WeightState,
    alpha: float,
    incorrect_mask: np.ndarray,
    target_mask: np.ndarray,
    *,
    r: float = float("nan"),
    epoch: int = 0,
    clamped: bool = False,
) -> WeightState:
    """Multiply flagged weights by exp(alpha) in place and log the epoch."""
    if not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    flagged = np.asarray(incorrect_mask, dtype=bool) & np.asarray(target_mask, dtype=bool)
    n_flagged = int(flagged.sum())
    if n_flagged:
        try:
            factor = math.exp(alpha)
        except OverflowError:
            raise FloatingPointError(f"epoch {epoch}: exp({alpha}) overflows") from None
        state.relative[flagged] *= factor
    if not (np.isfinite(state.relative).all() and (state.relative > 0).all()):
        raise FloatingPointError(f"epoch {epoch}: weight update produced non-finite or zero weights")
    rescale = 1.0
    if state.relative.max() / state.relative.min() > MAX_DYNAMIC_RANGE:
        rescale = 1.0 / float(state.relative.sum())
        state.relative *= rescale
        state.rescale_total *= rescale
        logger.info("epoch %d: weights rescaled by %.6g to bound dynamic range", epoch, rescale)
    state.epoch_log.append(
        EpochWeightLog(
            epoch=epoch,
            r=r,
            alpha=alpha,
            n_up=n_flagged if alpha > 0 else 0,
            n_down=n_flagged if alpha < 0 else 0,
            clamped=clamped,
            rescale=rescale,
        )
    )
    return state
