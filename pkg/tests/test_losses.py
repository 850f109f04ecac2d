import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reglab.core import ClassWeights, LossConfig, PredictionBatch, RefinementDirection, SampleGeometry
from reglab.errors import DimensionMismatch, MissingLogits
from reglab.losses import (
    LossValue,
    gfl,
    gfl_gradient,
    joint_loss,
    mean_cross_entropy,
    refinement_term,
    reg_gradient,
    reg_loss,
)


def oracle_focal(probs, labels, alpha, dist, cfg, use_g):
    """Scalar-loop reference, written without any vectorization."""
    n, c = len(probs), len(probs[0])
    total = 0.0
    for i in range(n):
        for k in range(c):
            if not cfg.all_class_sum and k != labels[i]:
                continue
            q = min(max(probs[i][k], cfg.prob_floor), 1 - cfg.prob_floor)
            g = 1.0
            if use_g:
                z = cfg.beta * (dist[i][k] - cfg.delta)
                if cfg.refinement_direction is RefinementDirection.CLOSER_IS_HEAVIER:
                    z = -z
                g = 1.0 / (1.0 + math.exp(-z))
            total += -alpha[k] * g * (1 - q) ** cfg.gamma * math.log(q)
    return total / n


def _instance(seed, n=6, c=4):
    rng = np.random.default_rng(seed)
    batch = PredictionBatch.from_logits(rng.normal(0, 2, (n, c)), rng.integers(0, c, n))
    geom = SampleGeometry(rng.uniform(0, 4, (n, c)))
    weights = ClassWeights(rng.uniform(0.2, 3, c))
    return batch, geom, weights


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("gamma", [0.0, 0.5, 2.0, 5.0])
@pytest.mark.parametrize("all_class_sum", [False, True])
def test_against_scalar_oracle(seed, gamma, all_class_sum):
    batch, geom, w = _instance(seed)
    for direction in RefinementDirection:
        cfg = LossConfig(gamma=gamma, beta=1.3, delta=0.7, refinement_direction=direction, all_class_sum=all_class_sum)
        args = (batch.probs.tolist(), batch.labels.tolist(), w.alpha.tolist(), geom.distances.tolist(), cfg)
        assert gfl(batch, w, cfg).value == pytest.approx(oracle_focal(*args, use_g=False), rel=1e-12)
        assert reg_loss(batch, geom, w, cfg).value == pytest.approx(oracle_focal(*args, use_g=True), rel=1e-12)


def test_value_is_mean_of_per_sample():
    batch, geom, w = _instance(0)
    lv = reg_loss(batch, geom, w, LossConfig())
    assert lv.value == pytest.approx(lv.per_sample.mean(), abs=1e-15)
    assert lv.per_sample.shape == (batch.n_samples,)


def test_gamma0_unit_alpha_is_cross_entropy():
    batch, _, _ = _instance(3, n=20, c=5)
    ce = mean_cross_entropy(batch).value
    assert abs(gfl(batch, ClassWeights.uniform(5), LossConfig(gamma=0.0)).value - ce) <= 1e-12


def test_reg_with_unit_refinement_is_gfl():
    batch, _, w = _instance(4)
    cfg = LossConfig(gamma=2.0)
    # g -> 1 as the sigmoid argument grows
    geom = SampleGeometry.constant(batch.n_samples, batch.n_classes, 0.0)
    cfg_far = LossConfig(gamma=2.0, beta=1e3, delta=0.5)
    assert np.allclose(refinement_term(geom, cfg_far), 1.0, atol=1e-15)
    assert abs(reg_loss(batch, geom, w, cfg_far).value - gfl(batch, w, cfg).value) <= 1e-9


def test_refinement_value():
    geom = SampleGeometry(np.array([[2.0]]))
    cfg = LossConfig(beta=2.0, delta=1.0, refinement_direction="farther")
    assert refinement_term(geom, cfg)[0, 0] == pytest.approx(0.8807970779778823, abs=1e-12)
    cfg = LossConfig(beta=2.0, delta=1.0, refinement_direction="closer")
    assert refinement_term(geom, cfg)[0, 0] == pytest.approx(1 - 0.8807970779778823, abs=1e-12)


@given(
    arrays(float, 12, elements=st.floats(0, 10)),
    st.floats(0.1, 5),
    st.floats(0, 3),
)
def test_refinement_monotone_in_distance(d, beta, delta):
    d = np.sort(d)
    geom = SampleGeometry(d[:, None])
    far = refinement_term(geom, LossConfig(beta=beta, delta=delta, refinement_direction="farther"))[:, 0]
    close = refinement_term(geom, LossConfig(beta=beta, delta=delta, refinement_direction="closer"))[:, 0]
    assert np.all(np.diff(far) >= 0)
    assert np.all(np.diff(close) <= 0)
    assert np.all((far >= 0) & (far <= 1))


@given(st.floats(0.01, 0.99), st.floats(0, 4), st.floats(0, 4))
def test_loss_decreases_with_gamma(p, g1, g2):
    lo, hi = sorted((g1, g2))
    batch = PredictionBatch(np.array([[p, 1 - p]]), np.array([0]))
    w = ClassWeights.uniform(2)
    assert gfl(batch, w, LossConfig(gamma=hi)).value <= gfl(batch, w, LossConfig(gamma=lo)).value + 1e-15


def test_nonnegative_and_finite_at_extremes():
    batch = PredictionBatch(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 0]))
    lv = gfl(batch, ClassWeights.uniform(2), LossConfig(gamma=0.0))
    assert np.all(np.isfinite(lv.per_sample)) and lv.per_sample.min() >= 0
    assert lv.per_sample[1] == pytest.approx(-math.log(1e-7))


@given(st.floats(0, 5), st.floats(0, 100), st.floats(0, 100))
def test_joint_loss_linear(lam, det, seg):
    cfg = LossConfig(lambda_task=lam)
    j = joint_loss(LossValue.from_per_sample([det]), LossValue.from_per_sample([seg]), cfg)
    assert j.value == pytest.approx(det + lam * seg, rel=1e-12, abs=1e-12)


@given(st.floats(0, 5), st.floats(0, 5))
def test_joint_loss_additive_in_lambda(l1, l2):
    det, seg = LossValue.from_per_sample([0.7, 1.1]), LossValue.from_per_sample([0.4, 2.5, 0.1])
    f = lambda lam: joint_loss(det, seg, LossConfig(lambda_task=lam)).value
    assert abs(f(l1) + f(l2) - det.value - f(l1 + l2)) <= 1e-12


def test_joint_loss_lambda_zero_exact():
    det = LossValue.from_per_sample([0.3, 0.9])
    j = joint_loss(det, LossValue.from_per_sample([5.0]), LossConfig(lambda_task=0.0))
    assert j.value == det.value


def test_shape_checks():
    batch, geom, _ = _instance(0)
    with pytest.raises(DimensionMismatch):
        gfl(batch, ClassWeights.uniform(3), LossConfig())
    with pytest.raises(DimensionMismatch):
        reg_loss(batch, SampleGeometry.constant(2, 4), ClassWeights.uniform(4), LossConfig())
    with pytest.raises(MissingLogits):
        gfl_gradient(PredictionBatch(batch.probs, batch.labels), ClassWeights.uniform(4), LossConfig())


def test_refinement_midpoint():
    geom = SampleGeometry(np.array([[0.8]]))
    for direction in RefinementDirection:
        cfg = LossConfig(beta=3.0, delta=0.8, refinement_direction=direction)
        assert refinement_term(geom, cfg)[0, 0] == 0.5


def test_closer_sample_carries_more_loss():
    probs = np.array([[0.6, 0.4], [0.6, 0.4]])
    batch = PredictionBatch(probs, np.array([0, 0]))
    geom = SampleGeometry(np.array([[0.5, 1.0], [2.0, 1.0]]))
    lv = reg_loss(batch, geom, ClassWeights.uniform(2), LossConfig())
    assert lv.per_sample[0] > lv.per_sample[1]


def test_joint_loss_example():
    det, seg = LossValue.from_per_sample([0.5]), LossValue.from_per_sample([0.25])
    assert joint_loss(det, seg, LossConfig(lambda_task=1.0)).value == 0.75


def test_gradient_vanishes_at_perfect_prediction():
    batch = PredictionBatch.from_logits(np.array([[30.0, 0.0, 0.0], [0.0, 0.0, 30.0]]), np.array([0, 2]))
    geom = SampleGeometry.constant(2, 3, 1.0)
    g = reg_gradient(batch, geom, ClassWeights.uniform(3), LossConfig())
    assert np.linalg.norm(g.d_logits) <= 1e-5


def test_gamma0_gradient_is_cross_entropy_gradient():
    rng = np.random.default_rng(8)
    batch = PredictionBatch.from_logits(rng.normal(size=(7, 4)), rng.integers(0, 4, 7))
    g = gfl_gradient(batch, ClassWeights.uniform(4), LossConfig(gamma=0.0)).d_logits
    assert np.abs(g - (batch.probs - batch.onehot()) / 7).max() <= 1e-9
