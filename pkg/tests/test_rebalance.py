import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reglab.core import REFERENCE_DETECTION_COUNTS, AnnotationCounts, ClassWeights, PredictionBatch, WeightScheme
from reglab.errors import ZeroCountClass
from reglab.rebalance import (
    inverse_frequency_weights,
    normalized_inverse_frequency_weights,
    rebalanced_cross_entropy,
    weights_for_scheme,
)

count_maps = st.dictionaries(st.sampled_from("abcdefgh"), st.integers(1, 10_000), min_size=2)


def test_reference_inverse_frequency():
    w = inverse_frequency_weights(AnnotationCounts(REFERENCE_DETECTION_COUNTS)).as_dict()
    assert w["Bus stops"] == 73.0
    assert abs(w["Single-arm poles"] - 3650 / 1500) <= 1e-12
    assert abs(w["Single-arm poles"] - 2.43) <= 5e-3


def test_reference_normalized():
    w = normalized_inverse_frequency_weights(AnnotationCounts(REFERENCE_DETECTION_COUNTS)).as_dict()
    assert w["Bus stops"] == pytest.approx(73 / 7, abs=1e-4)
    assert w["Bus stops"] == pytest.approx(10.4286, abs=1e-4)


def test_small_example():
    w = inverse_frequency_weights(AnnotationCounts({"a": 60, "b": 30, "c": 10, "d": 20})).alpha
    assert w[2] == pytest.approx(12.0)
    assert normalized_inverse_frequency_weights(AnnotationCounts({"a": 60, "b": 30, "c": 10, "d": 20})).alpha[1] == pytest.approx(1.0)


def test_zero_count_class():
    with pytest.raises(ZeroCountClass) as err:
        inverse_frequency_weights(AnnotationCounts({"a": 3, "b": 0}))
    assert err.value.class_name == "b"


@given(count_maps, st.integers(1, 50))
def test_scale_invariant(counts, k):
    a = AnnotationCounts(counts)
    assert np.allclose(inverse_frequency_weights(a).alpha, inverse_frequency_weights(a.scaled(k)).alpha, rtol=1e-12)


@given(count_maps)
def test_ratio_is_class_count(counts):
    a = AnnotationCounts(counts)
    ratio = inverse_frequency_weights(a).alpha / normalized_inverse_frequency_weights(a).alpha
    assert np.allclose(ratio, len(counts), rtol=1e-12)


@given(count_maps)
def test_weighted_mass_is_uniform(counts):
    # alpha_c N_c is the same for every class
    a = AnnotationCounts(counts)
    mass = inverse_frequency_weights(a).alpha * a.as_array()
    assert np.allclose(mass, a.total, rtol=1e-12)


def test_balanced_normalized_is_ones():
    assert np.allclose(normalized_inverse_frequency_weights(AnnotationCounts({"a": 5, "b": 5})).alpha, 1.0)


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_cross_entropy_linear_in_weights(s, t):
    rng = np.random.default_rng(0)
    batch = PredictionBatch.from_logits(rng.normal(size=(8, 3)), rng.integers(0, 3, 8))
    w1, w2 = ClassWeights(np.array([1.0, 2.0, 0.5])), ClassWeights(np.array([0.3, 1.0, 4.0]))
    combo = ClassWeights(s * w1.alpha + t * w2.alpha)
    lhs = rebalanced_cross_entropy(batch, combo).value
    rhs = s * rebalanced_cross_entropy(batch, w1).value + t * rebalanced_cross_entropy(batch, w2).value
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_cross_entropy_is_sum_form():
    batch = PredictionBatch(np.array([[0.5, 0.5], [0.25, 0.75]]), np.array([0, 1]))
    lv = rebalanced_cross_entropy(batch, ClassWeights(np.array([2.0, 1.0])))
    assert lv.value == pytest.approx(-2 * np.log(0.5) - np.log(0.75), rel=1e-14)


def test_schemes():
    a = AnnotationCounts({"a": 1, "b": 3})
    assert np.all(weights_for_scheme(a, "uniform").alpha == 1.0)
    assert weights_for_scheme(a, WeightScheme.INVERSE_FREQUENCY).alpha[0] == 4.0
    with pytest.raises(ValueError):
        weights_for_scheme(a, "dual-optimized")


def test_equal_counts_give_class_count():
    w = inverse_frequency_weights(AnnotationCounts({"a": 7, "b": 7, "c": 7, "d": 7})).alpha
    assert np.all(w == 4.0)


def test_segmentation_normalized():
    from reglab.core import REFERENCE_SEGMENTATION_COUNTS

    w = normalized_inverse_frequency_weights(AnnotationCounts(REFERENCE_SEGMENTATION_COUNTS)).as_dict()
    assert w["Pedestrian bridges"] == pytest.approx(4.8, abs=1e-12)


def test_unit_weights_give_n_times_mean_ce():
    from reglab.losses import mean_cross_entropy

    rng = np.random.default_rng(1)
    batch = PredictionBatch.from_logits(rng.normal(size=(9, 4)), rng.integers(0, 4, 9))
    lv = rebalanced_cross_entropy(batch, ClassWeights.uniform(4))
    assert lv.value == pytest.approx(9 * mean_cross_entropy(batch).value, rel=1e-13)


def test_against_scalar_oracle():
    import math

    rng = np.random.default_rng(2)
    counts = AnnotationCounts({"a": 40, "b": 7, "c": 13})
    w = normalized_inverse_frequency_weights(counts)
    batch = PredictionBatch.from_logits(rng.normal(size=(6, 3)), rng.integers(0, 3, 6))
    expected = 0.0
    for row, y in zip(batch.probs.tolist(), batch.labels.tolist()):
        expected -= (counts.total / (3 * list(counts.per_class.values())[y])) * math.log(row[y])
    assert rebalanced_cross_entropy(batch, w).value == pytest.approx(expected, rel=1e-13)
