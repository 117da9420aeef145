from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import make_corpus
from rwlab.corpus import Polarity
from rwlab.model import (
    FeatureVector,
    Featurizer,
    Mode,
    Model,
    NumericalError,
    OptimizerState,
    apply_update,
    batch_forward,
    batch_gradient,
    example_loss_and_grad,
    featurize,
    forward,
    load_checkpoint,
    save_checkpoint,
    softmax,
)
from rwlab.synthetic import SyntheticSpec, generate_synthetic

CONTRA = make_corpus([("the screen is good but not the battery", [("screen", "positive"), ("battery", "negative")])])


def test_featurize_deterministic_and_partitioned():
    ex = CONTRA.examples[0]
    a = featurize(ex, Mode.ASPECT_AWARE)
    b = featurize(ex, Mode.ASPECT_AWARE)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.values, b.values)
    half = a.dim // 2
    assert (a.indices >= half).any() and (a.indices < a.dim).all()
    blind = featurize(ex, Mode.ASPECT_BLIND)
    assert (blind.indices < half).all()
    # 8 unigrams (the twice) + 7 bigrams, hashed into 2**17 buckets
    assert blind.values.sum() == 8 + 7


def test_blind_mode_ignores_aspect():
    a, b = CONTRA.examples
    fa, fb = featurize(a, Mode.ASPECT_BLIND), featurize(b, Mode.ASPECT_BLIND)
    assert fa.as_dict() == fb.as_dict()


def test_window_features_distinguish_aspects_of_contrastive_sentence():
    _, _, _, test_c = generate_synthetic(SyntheticSpec(n_sentences=50, n_test_sentences=40, n_valid_examples=10))
    sid = test_c.sentence_ids[0]
    a, b = (test_c.examples[i] for i in sorted(test_c.sentence_index[sid]))
    fa, fb = featurize(a, Mode.ASPECT_AWARE), featurize(b, Mode.ASPECT_AWARE)
    half = fa.dim // 2
    wa = set(fa.indices[fa.indices >= half])
    wb = set(fb.indices[fb.indices >= half])
    assert wa != wb


def test_window_excludes_aspect_tokens_and_respects_radius():
    ex = make_corpus([("a b c d aspect e f g h", [("aspect", "neutral")])]).examples[0]
    feats = Featurizer(hash_bits=12)
    keys = {feats.half + feats._index(f"w\x1f{d}\x1f{t}") for d, t in [(-3, "b"), (-2, "c"), (-1, "d"), (1, "e"), (2, "f"), (3, "g")]}
    got = {i for i in feats.counts(ex, Mode.ASPECT_AWARE) if i >= feats.half}
    assert got == keys


def test_forward_known_values():
    model = Model.zeros(hash_bits=6)
    fv = FeatureVector(np.array([1, 5]), np.array([1.0, 2.0]), 64)
    np.testing.assert_allclose(forward(model, fv), [1 / 3] * 3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(softmax(np.array([math.log(2), 0.0, 0.0])), [0.5, 0.25, 0.25], atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = softmax(rng.normal(scale=30, size=3))
        assert (p > 0).all() and abs(p.sum() - 1) <= 1e-12


def test_zero_model_loss_is_ln3():
    model = Model.zeros(hash_bits=6)
    fv = FeatureVector(np.array([3]), np.array([1.0]), 64)
    loss, _ = example_loss_and_grad(model, fv, Polarity.NEUTRAL)
    assert loss == pytest.approx(math.log(3), abs=1e-15)


def test_confident_correct_prediction_has_zero_loss_and_gradient():
    model = Model.zeros(hash_bits=4)
    model.bias[:] = [800.0, 0.0, 0.0]
    loss, (gw, gb) = example_loss_and_grad(model, FeatureVector(np.array([2]), np.array([1.0]), 16), 0)
    assert loss == 0.0 and not gw.any() and not gb.any()


def test_loss_floor():
    model = Model.zeros(hash_bits=4)
    model.bias[:] = [0.0, 900.0, 0.0]
    loss, _ = example_loss_and_grad(model, FeatureVector(np.array([2]), np.array([1.0]), 16), 0)
    assert loss == pytest.approx(-math.log(1e-30))


def _finite_difference_trial(rng, bits=5, h=1e-6):
    dim = 1 << bits
    # moderate scale keeps probabilities away from saturation, where the
    # gradient is tiny and the difference quotient is all round-off
    model = Model(rng.normal(scale=0.5, size=(3, dim)), rng.normal(scale=0.5, size=3), hash_bits=bits)
    k = int(rng.integers(1, 8))
    idx = np.sort(rng.choice(dim, size=k, replace=False))
    fv = FeatureVector(idx, rng.uniform(0.5, 3.0, size=k), dim)
    label = int(rng.integers(3))
    _, (gw, gb) = example_loss_and_grad(model, fv, label)
    analytic = np.concatenate([gw[:, idx].ravel(), gb])
    numeric = np.empty_like(analytic)
    params = [(model.weights, (c, j)) for c in range(3) for j in idx] + [(model.bias, (c,)) for c in range(3)]
    for n, (arr, pos) in enumerate(params):
        keep = arr[pos]
        arr[pos] = keep + h
        up = example_loss_and_grad(model, fv, label)[0]
        arr[pos] = keep - h
        down = example_loss_and_grad(model, fv, label)[0]
        arr[pos] = keep
        numeric[n] = (up - down) / (2 * h)
    # untouched columns have exactly zero gradient
    mask = np.ones(dim, dtype=bool)
    mask[idx] = False
    assert not gw[:, mask].any()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def test_gradient_matches_finite_differences_100_trials():
    rng = np.random.default_rng(2024)
    worst = max(_finite_difference_trial(rng) for _ in range(100))
    assert worst < 1e-5, worst


def test_batch_gradient_equals_sum_of_example_gradients():
    rng = np.random.default_rng(3)
    bits = 6
    model = Model(rng.normal(size=(3, 1 << bits)), rng.normal(size=3), hash_bits=bits)
    X = sp.random(5, 1 << bits, density=0.1, random_state=4, format="csr")
    y = np.array([0, 1, 2, 1, 0])
    coef = rng.uniform(size=5)
    coef /= coef.sum()
    losses, P = batch_forward(model, X, y)
    cols, gcols, gb = batch_gradient(X, P, y, coef)
    dense = np.zeros_like(model.weights)
    dense_b = np.zeros(3)
    for i in range(5):
        row = X.getrow(i)
        fv = FeatureVector(row.indices, row.data, 1 << bits)
        loss, (gw, gbi) = example_loss_and_grad(model, fv, int(y[i]))
        assert loss == pytest.approx(losses[i], rel=1e-12)
        dense += coef[i] * gw
        dense_b += coef[i] * gbi
    np.testing.assert_allclose(gcols, dense[:, cols], rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(gb, dense_b, rtol=1e-12, atol=1e-15)


def test_adam_single_step_by_hand():
    model = Model.zeros(hash_bits=2)
    opt = OptimizerState.for_model(model, learning_rate=0.1)
    g = np.zeros((3, 4))
    g[0, 1], g[2, 3] = 0.5, -2.0
    apply_update(model, opt, g, np.array([0.0, 1e-3, 0.0]))
    # first step: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + 1e-8)
    expected = np.zeros((3, 4))
    expected[0, 1] = -0.1 * 0.5 / (0.5 + 1e-8)
    expected[2, 3] = 0.1 * 2.0 / (2.0 + 1e-8)
    np.testing.assert_allclose(model.weights, expected, rtol=1e-15, atol=0)
    assert model.bias[1] == pytest.approx(-0.1 * 1e-3 / (1e-3 + 1e-8), rel=1e-13)
    assert opt.step == 1 and (opt.v_w >= 0).all()


def test_adam_zero_gradient_noop_and_determinism():
    model = Model.zeros(hash_bits=3)
    opt = OptimizerState.for_model(model)
    apply_update(model, opt, np.zeros((3, 8)), np.zeros(3))
    assert not model.weights.any() and not model.bias.any() and opt.step == 1
    rng = np.random.default_rng(5)
    grads = [(rng.normal(size=(3, 8)), rng.normal(size=3)) for _ in range(4)]
    results = []
    for _ in range(2):
        m, o = Model.zeros(hash_bits=3), OptimizerState.for_model(Model.zeros(hash_bits=3))
        for gw, gb in grads:
            apply_update(m, o, gw, gb)
        results.append(m)
    assert np.array_equal(results[0].weights, results[1].weights)


def test_sparse_and_dense_updates_are_bit_identical():
    rng = np.random.default_rng(6)
    dense_m, sparse_m = Model.zeros(hash_bits=6), Model.zeros(hash_bits=6)
    dense_o, sparse_o = OptimizerState.for_model(dense_m), OptimizerState.for_model(sparse_m)
    for _ in range(6):
        cols = np.sort(rng.choice(64, size=5, replace=False))
        block = rng.normal(size=(3, 5))
        full = np.zeros((3, 64))
        full[:, cols] = block
        gb = rng.normal(size=3)
        apply_update(dense_m, dense_o, full, gb)
        apply_update(sparse_m, sparse_o, block, gb, cols)
    assert np.array_equal(dense_m.weights, sparse_m.weights)
    assert np.array_equal(dense_m.bias, sparse_m.bias)


def test_nonfinite_gradient_is_rejected():
    model = Model.zeros(hash_bits=2)
    g = np.zeros((3, 4))
    g[1, 1] = np.nan
    with pytest.raises(NumericalError):
        apply_update(model, OptimizerState.for_model(model), g, np.zeros(3))


def test_predict_tie_break_and_blind_consistency():
    model = Model.zeros(hash_bits=8)
    X = Featurizer(8).matrix(CONTRA.examples, Mode.ASPECT_AWARE)
    assert model.predict(X).tolist() == [0, 0]
    rng = np.random.default_rng(1)
    model = Model(rng.normal(size=(3, 256)), rng.normal(size=3), hash_bits=8)
    Xb = Featurizer(8).matrix(CONTRA.examples, Mode.ASPECT_BLIND)
    pred = model.predict(Xb)
    assert pred[0] == pred[1]


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    model = Model(rng.normal(size=(3, 32)), rng.normal(size=3), mode=Mode.ASPECT_BLIND, hash_bits=5, hash_seed=11)
    path = tmp_path / "m.bin"
    save_checkpoint(model, path)
    assert path.read_bytes()[:6] == b"RWLAB1"
    back = load_checkpoint(path)
    assert np.array_equal(back.weights, model.weights) and np.array_equal(back.bias, model.bias)
    assert (back.mode, back.hash_bits, back.hash_seed) == (Mode.ASPECT_BLIND, 5, 11)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
