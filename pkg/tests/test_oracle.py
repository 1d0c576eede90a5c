"""Plaintext reference trainers: hand-checked steps, exact/quantized
agreement, statistics identities."""

import math
import statistics

import pytest

from phetrain.encoding import fx_encode
from phetrain.oracle import (
    TrainConfig,
    accuracy,
    augment,
    local_nb_stats,
    lr_log_loss,
    lr_predict,
    merge_nb_stats,
    model_from_stats,
    nb_predict,
    plain_lr_sgd,
    plain_nb,
    plain_svm_sgd,
    quantized_exp_bases,
    svm_predict,
)


def test_accuracy():
    assert accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75
    with pytest.raises(ValueError):
        accuracy([], [])


def test_augment_appends_bias():
    assert augment((0.5, 0.25)) == (0.5, 0.25, 1.0)


# ---------------------------------------------------------------------------
# Margin trainer


def test_svm_exact_first_step_hand_value():
    # single record (0.5,), label +1, lam=0.1: theta starts at 0 so the
    # margin is violated and theta becomes lam*alpha*y*(x, 1) = (0.05, 0.1)
    cfg = TrainConfig(lam=0.1, alpha=1.0, iters=1, seed=0)
    trace = plain_svm_sgd([(0.5,)], [1], cfg, quantized=False)
    assert trace[-1] == pytest.approx([0.05, 0.1])


def test_svm_quantized_first_step_hand_value():
    cfg = TrainConfig(lam=0.1, alpha=1.0, iters=1, seed=0)
    trace = plain_svm_sgd([(0.5,)], [1], cfg, quantized=True)
    # a=fx(0.9)=90, b=fx(0.1)=10; theta = round((0 + 10*xy)/100)
    assert trace[-1] == [5, 10]


def test_svm_quantized_tracks_exact():
    rows = [(0.1, 0.9), (0.9, 0.1), (0.2, 0.8), (0.8, 0.3)]
    y = [1, -1, 1, -1]
    cfg = TrainConfig(lam=0.1, alpha=1.0, iters=100, seed=1)
    q = plain_svm_sgd(rows, y, cfg, quantized=True)[-1]
    e = plain_svm_sgd(rows, y, cfg, quantized=False)[-1]
    for qm, ev in zip(q, e):
        assert qm / 100 == pytest.approx(ev, abs=0.1)


def test_svm_predict_sign():
    # theta mantissas (100, -50, 0): u = 1.0*x0 - 0.5*x1
    assert svm_predict([100, -50, 0], (0.9, 0.1)) == 1
    assert svm_predict([100, -50, 0], (0.1, 0.9)) == -1


# ---------------------------------------------------------------------------
# Sigmoid trainer


def test_sigmoid_at_zero():
    # theta = 0 scores 0.5 which the predictor maps to class 1
    assert lr_predict([0, 0], (0.3,)) == 1
    assert lr_predict([-100, 0], (1.0,)) == 0


def test_quantized_exp_bases_use_quantized_feature():
    # 0.999 quantizes to 0.99; bases must come from e^{+-0.99}
    pos, neg = quantized_exp_bases((0.999,))
    assert pos == [fx_encode(math.exp(0.99), 2)]
    assert neg == [fx_encode(math.exp(-0.99), 2)]


def test_lr_exact_first_step_hand_value():
    # single record (0.5,), label 1, lam=0.2: sigma(0)=0.5 so
    # theta = 0.2 * (1 - 0.5) * (0.5, 1) = (0.05, 0.1)
    cfg = TrainConfig(lam=0.2, iters=1, seed=0)
    trace = plain_lr_sgd([(0.5,)], [1], cfg, quantized=False)
    assert trace[-1] == pytest.approx([0.05, 0.1])


def test_lr_quantized_tracks_exact():
    rows = [(0.1, 0.9), (0.9, 0.1), (0.2, 0.8), (0.8, 0.3)]
    y = [1, 0, 1, 0]
    cfg = TrainConfig(lam=0.1, iters=100, seed=2)
    q = plain_lr_sgd(rows, y, cfg, quantized=True)[-1]
    e = plain_lr_sgd(rows, y, cfg, quantized=False)[-1]
    for qm, ev in zip(q, e):
        assert qm / 100 == pytest.approx(ev, abs=0.2)


def test_lr_loss_decreases_on_separable_data():
    rows = [(0.1,), (0.2,), (0.8,), (0.9,)]
    y = [0, 0, 1, 1]
    cfg = TrainConfig(lam=0.3, iters=200, seed=3)
    trace = plain_lr_sgd(rows, y, cfg, quantized=False)
    assert lr_log_loss(trace[-1], rows, y) < lr_log_loss(trace[0], rows, y)


def test_lr_zero_step_freezes_theta():
    # lam below the scale-2 quantum encodes to a zero step
    cfg = TrainConfig(lam=0.001, iters=10, seed=0)
    trace = plain_lr_sgd([(0.5,)], [1], cfg, quantized=True)
    assert all(step == [0, 0] for step in trace)


# ---------------------------------------------------------------------------
# Count-based trainer


def test_nb_gaussian_hand_values():
    X = [(0.3,), (0.4,), (0.5,)]
    model = plain_nb(X, [1, 1, 1], kinds=("numeric",), classes=(1,))
    mu, var = model.gaussian[(1, 0)]
    assert mu == pytest.approx(0.4)
    # population variance of {0.3, 0.4, 0.5} = 0.00666...
    assert var == pytest.approx(0.006666666, abs=1e-6)
    assert model.priors[1] == 1.0


def test_nb_variance_identity_matches_direct_form():
    import random
    rng = random.Random(9)
    vals = [round(rng.uniform(0, 1), 2) for _ in range(200)]
    model = plain_nb([(v,) for v in vals], [0] * 200,
                     kinds=("numeric",), classes=(0,))
    _, var = model.gaussian[(0, 0)]
    # E[x^2] - E[x]^2 against the direct population variance of the
    # quantized values
    direct = statistics.pvariance([fx_encode(v, 2) / 100 for v in vals])
    assert var == pytest.approx(direct, abs=1e-9)


def test_nb_variance_floor():
    model = plain_nb([(0.5,), (0.5,)], [0, 0], kinds=("numeric",),
                     classes=(0,))
    assert model.gaussian[(0, 0)][1] == 1e-9


def test_nb_merge_equals_pooled():
    X = [(0.1,), (0.2,), (0.7,), (0.9,), (0.4,)]
    y = [0, 0, 1, 1, 0]
    pooled = local_nb_stats(X, y, ("numeric",))
    merged = merge_nb_stats([
        local_nb_stats(X[:2], y[:2], ("numeric",)),
        local_nb_stats(X[2:], y[2:], ("numeric",)),
    ])
    assert pooled.counts == merged.counts
    assert pooled.sum_x == merged.sum_x
    assert pooled.sum_xsq == merged.sum_xsq
    m1 = model_from_stats(pooled)
    m2 = model_from_stats(merged)
    assert m1.priors == m2.priors and m1.gaussian == m2.gaussian


def test_nb_categorical_counts():
    X = [("a",), ("b",), ("a",)]
    # discrete values arrive ordinal-normalized in the pipeline; here the
    # raw mantissa keying is exercised directly
    Xn = [(0.0,), (1.0,), (0.0,)]
    st = local_nb_stats(Xn, [1, 1, 0], ("discrete",))
    assert st.cat_counts[(1, 0, 0)] == 1
    assert st.cat_counts[(1, 0, 100)] == 1
    assert st.cat_counts[(0, 0, 0)] == 1


def test_nb_predict_prefers_closer_class():
    X = [(0.1,), (0.2,), (0.8,), (0.9,)]
    y = [0, 0, 1, 1]
    model = plain_nb(X, y, ("numeric",))
    assert nb_predict(model, (0.15,)) == 0
    assert nb_predict(model, (0.85,)) == 1


def test_nb_empty_raises():
    with pytest.raises(ValueError):
        plain_nb([], [], ("numeric",))
