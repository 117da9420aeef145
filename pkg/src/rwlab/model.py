"""Hashed n-gram featurization and a multinomial softmax classifier trained with Adam."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import N_CLASSES, AspectExample, Polarity

WINDOW = 3
CHECKPOINT_MAGIC = b"RWLAB1"
LOSS_FLOOR = 1e-30


class Mode(str, Enum):
    ASPECT_AWARE = "aspect_aware"
    ASPECT_BLIND = "aspect_blind"


class NumericalError(RuntimeError):
    """Non-finite values reached the parameters, gradients or loss."""


@dataclass(frozen=True)
class FeatureVector:
    """Sparse feature vector with sorted, unique indices."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def _hash(key: str, seed: int) -> int:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little")


class Featurizer:
    """Maps examples to hashed features.

    Indices below ``dim // 2`` hold sentence-level unigrams and bigrams;
    indices at or above it hold unigrams around the aspect, tagged with
    their signed distance from the span.
    """

    def __init__(self, hash_bits: int = 18, hash_seed: int = 0):
        if hash_bits < 2:
            raise ValueError("hash_bits must be >= 2")
        self.hash_bits = hash_bits
        self.hash_seed = hash_seed
        self.dim = 1 << hash_bits
        self.half = self.dim // 2
        self._cache: dict[str, int] = {}

    def _index(self, key: str) -> int:
        idx = self._cache.get(key)
        if idx is None:
            idx = _hash(key, self.hash_seed) % self.half
            self._cache[key] = idx
        return idx

    def counts(self, example: AspectExample, mode: Mode | str) -> dict[int, float]:
        mode = Mode(mode)
        feats: dict[int, float] = {}
        text = example.text
        for tok in text:
            i = self._index("u\x1f" + tok)
            feats[i] = feats.get(i, 0.0) + 1.0
        for a, b in zip(text, text[1:]):
            i = self._index("b\x1f" + a + "\x1f" + b)
            feats[i] = feats.get(i, 0.0) + 1.0
        if mode is Mode.ASPECT_AWARE:
            start, end = example.aspect_span
            for pos in range(max(0, start - WINDOW), start):
                self._add_window(feats, pos - start, text[pos])
            for pos in range(end, min(len(text), end + WINDOW)):
                self._add_window(feats, pos - end + 1, text[pos])
        return feats

    def _add_window(self, feats: dict[int, float], distance: int, token: str) -> None:
        i = self.half + self._index(f"w\x1f{distance}\x1f{token}")
        feats[i] = feats.get(i, 0.0) + 1.0

    def featurize(self, example: AspectExample, mode: Mode | str) -> FeatureVector:
        feats = self.counts(example, mode)
        idx = np.array(sorted(feats), dtype=np.int64)
        vals = np.array([feats[i] for i in idx], dtype=np.float64)
        return FeatureVector(idx, vals, self.dim)

    def matrix(self, examples: Sequence[AspectExample], mode: Mode | str) -> sp.csr_matrix:
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for ex in examples:
            feats = self.counts(ex, mode)
            for i in sorted(feats):
                indices.append(i)
                data.append(feats[i])
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
            shape=(len(examples), self.dim),
        )


def featurize(example: AspectExample, mode: Mode | str, hash_bits: int = 18, hash_seed: int = 0) -> FeatureVector:
    return Featurizer(hash_bits, hash_seed).featurize(example, mode)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Model:
    weights: np.ndarray  # (N_CLASSES, 2**hash_bits)
    bias: np.ndarray
    mode: Mode = Mode.ASPECT_AWARE
    hash_bits: int = 18
    hash_seed: int = 0

    def __post_init__(self):
        # Column-major storage: weights.T is C-contiguous, so X @ weights.T needs no copy
        # and per-feature column gathers are contiguous rows.
        self.weights = np.asfortranarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.mode = Mode(self.mode)

    @classmethod
    def zeros(cls, hash_bits: int = 18, mode: Mode | str = Mode.ASPECT_AWARE, hash_seed: int = 0) -> "Model":
        return cls(np.zeros((N_CLASSES, 1 << hash_bits)), np.zeros(N_CLASSES), Mode(mode), hash_bits, hash_seed)

    @property
    def dim(self) -> int:
        return 1 << self.hash_bits

    def featurizer(self) -> Featurizer:
        return Featurizer(self.hash_bits, self.hash_seed)

    def copy(self) -> "Model":
        return Model(self.weights.copy(order="F"), self.bias.copy(), self.mode, self.hash_bits, self.hash_seed)

    def logits(self, X: sp.spmatrix) -> np.ndarray:
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba(self, X: sp.spmatrix) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X: sp.spmatrix) -> np.ndarray:
        # np.argmax keeps the first maximum: positive < negative < neutral
        return np.argmax(self.logits(X), axis=1)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.weights).all() and np.isfinite(self.bias).all())


def forward(model: Model, fv: FeatureVector) -> np.ndarray:
    logits = model.weights[:, fv.indices] @ fv.values + model.bias
    return softmax(logits)


def _label_index(label: Polarity | int) -> int:
    return label.index if isinstance(label, Polarity) else int(label)


def example_loss_and_grad(
    model: Model, fv: FeatureVector, label: Polarity | int
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Cross-entropy of one example and its exact gradient (dense, shaped like the parameters)."""
    y = _label_index(label)
    p = forward(model, fv)
    loss = -float(np.log(max(p[y], LOSS_FLOOR)))
    delta = p.copy()
    delta[y] -= 1.0
    grad_w = np.zeros_like(model.weights)
    grad_w[:, fv.indices] = np.outer(delta, fv.values)
    return loss, (grad_w, delta)


def batch_forward(model: Model, X: sp.csr_matrix, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-example cross-entropy losses and class probabilities."""
    P = model.predict_proba(X)
    losses = -np.log(np.maximum(P[np.arange(len(labels)), labels], LOSS_FLOOR))
    return losses, P


def batch_gradient(
    X: sp.csr_matrix, P: np.ndarray, labels: np.ndarray, coef: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient of ``sum(coef * loss)`` given probabilities ``P``.

    Returns ``(columns, grad_columns, grad_bias)``: the weight gradient is
    zero outside the feature columns present in ``X``, so only those
    columns (sorted) and their (N_CLASSES, len(columns)) block are returned.
    """
    delta = P.copy()
    delta[np.arange(len(labels)), labels] -= 1.0
    delta *= coef[:, None]
    columns = np.unique(X.indices)
    grad = np.asarray(X[:, columns].T @ delta).T
    return columns, np.ascontiguousarray(grad), delta.sum(axis=0)


@dataclass
class OptimizerState:
    learning_rate: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m_w: np.ndarray | None = field(default=None, repr=False)
    v_w: np.ndarray | None = field(default=None, repr=False)
    m_b: np.ndarray | None = field(default=None, repr=False)
    v_b: np.ndarray | None = field(default=None, repr=False)
    step: int = 0
    # Sorted columns that ever received a gradient.  Outside them both moments
    # are exactly zero, so the dense update is an exact no-op there.
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def for_model(cls, model: Model, learning_rate: float = 0.003) -> "OptimizerState":
        return cls(
            learning_rate,
            m_w=np.zeros_like(model.weights, order="F"),
            v_w=np.zeros_like(model.weights, order="F"),
            m_b=np.zeros_like(model.bias),
            v_b=np.zeros_like(model.bias),
        )

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            self.learning_rate, self.beta1, self.beta2, self.eps,
            None if self.m_w is None else self.m_w.copy(order="F"),
            None if self.v_w is None else self.v_w.copy(order="F"),
            None if self.m_b is None else self.m_b.copy(),
            None if self.v_b is None else self.v_b.copy(),
            self.step, self.active.copy(),
        )


def _adam_step(param, m, v, g, opt: OptimizerState):
    """Bias-corrected Adam on arrays; returns the new (param, m, v)."""
    b1, b2 = opt.beta1, opt.beta2
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * (g * g)
    m_hat = m / (1.0 - b1**opt.step)
    v_hat = v / (1.0 - b2**opt.step)
    return param - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps), m, v


def apply_update(
    model: Model,
    opt: OptimizerState,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
    columns: np.ndarray | None = None,
) -> None:
    """One Adam step in place: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
    theta <- theta - lr * m_hat / (sqrt(v_hat) + 1e-8).

    ``grad_w`` is either the full (N_CLASSES, D) gradient or, with
    ``columns``, the block for those sorted feature columns.  Both forms
    give bit-identical parameters.
    """
    if not (np.isfinite(grad_w).all() and np.isfinite(grad_b).all()):
        raise NumericalError(f"non-finite gradient at optimizer step {opt.step + 1}")
    if opt.m_w is None:
        fresh = OptimizerState.for_model(model, opt.learning_rate)
        opt.m_w, opt.v_w, opt.m_b, opt.v_b = fresh.m_w, fresh.v_w, fresh.m_b, fresh.v_b
    if columns is None:
        columns = np.flatnonzero(np.any(grad_w != 0.0, axis=0))
        grad_w = grad_w[:, columns]
    opt.step += 1
    active = np.union1d(opt.active, columns)
    g = np.zeros((grad_w.shape[0], len(active)))
    g[:, np.searchsorted(active, columns)] = grad_w
    w, m, v = _adam_step(model.weights[:, active], opt.m_w[:, active], opt.v_w[:, active], g, opt)
    model.weights[:, active] = w
    opt.m_w[:, active] = m
    opt.v_w[:, active] = v
    model.bias, opt.m_b, opt.v_b = _adam_step(model.bias, opt.m_b, opt.v_b, grad_b, opt)
    opt.active = active


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Binary checkpoint: magic, header length, JSON header, float64 LE weights then bias."""
    header = json.dumps(
        {
            "format": CHECKPOINT_MAGIC.decode(),
            "hash_bits": model.hash_bits,
            "hash_seed": model.hash_seed,
            "mode": model.mode.value,
            "n_classes": N_CLASSES,
            "layout": "weights row-major (n_classes x 2**hash_bits) then bias, float64 little-endian",
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not an {CHECKPOINT_MAGIC.decode()} checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen])
    off += hlen
    dim = 1 << header["hash_bits"]
    k = header["n_classes"]
    weights = np.frombuffer(raw, dtype="<f8", count=k * dim, offset=off).reshape(k, dim)
    off += 8 * k * dim
    bias = np.frombuffer(raw, dtype="<f8", count=k, offset=off).astype(np.float64)
    return Model(weights, bias, Mode(header["mode"]), header["hash_bits"], header["hash_seed"])
