"""Class-balancing weights from annotation counts and the rebalanced
(weighted, sum-reduced) cross-entropy."""

from __future__ import annotations

import numpy as np

from .core import AnnotationCounts, ClassWeights, PredictionBatch, WeightScheme
from .errors import DimensionMismatch, MissingLogits, ZeroCountClass
from .losses import LossGradient, LossValue, clamp_probs


def _checked_counts(counts: AnnotationCounts) -> np.ndarray:
    for name, n in counts.per_class.items():
        if n <= 0:
            raise ZeroCountClass(name)
    return counts.as_array()


def inverse_frequency_weights(counts: AnnotationCounts) -> ClassWeights:
    """alpha_c = N_total / N_c."""
    n = _checked_counts(counts)
    return ClassWeights(counts.total / n, WeightScheme.INVERSE_FREQUENCY, counts.names)


def normalized_inverse_frequency_weights(counts: AnnotationCounts) -> ClassWeights:
    """alpha_c = N_total / (C * N_c); a balanced dataset gets all-ones."""
    n = _checked_counts(counts)
    return ClassWeights(counts.total / (n.size * n), WeightScheme.INVERSE_FREQUENCY_NORMALIZED, counts.names)


def weights_for_scheme(counts: AnnotationCounts, scheme: WeightScheme | str) -> ClassWeights:
    scheme = WeightScheme(scheme)
    if scheme is WeightScheme.UNIFORM:
        return ClassWeights.uniform(len(counts.per_class), counts.names)
    if scheme is WeightScheme.INVERSE_FREQUENCY:
        return inverse_frequency_weights(counts)
    if scheme is WeightScheme.INVERSE_FREQUENCY_NORMALIZED:
        return normalized_inverse_frequency_weights(counts)
    raise ValueError(f"scheme {scheme.value!r} is produced by the primal-dual solver, not from counts")


def rebalanced_cross_entropy(
    batch: PredictionBatch, weights: ClassWeights, prob_floor: float = 1e-7
) -> LossValue:
    """-sum_c alpha_c sum_i [y_i = c] log p_c(x_i).

    Sum-reduced, unlike the focal losses: ``value`` is the total, and
    ``per_sample`` holds each sample's term, so ``value == per_sample.sum()``.
    Divide by N to compare against the mean-form losses.
    """
    if weights.alpha.shape != (batch.n_classes,):
        raise DimensionMismatch("class weight count does not match batch width")
    idx = np.arange(batch.n_samples)
    p = clamp_probs(batch.probs[idx, batch.labels], prob_floor)
    per_sample = -weights.alpha[batch.labels] * np.log(p)
    return LossValue(float(per_sample.sum()), per_sample)


def rebalanced_cross_entropy_gradient(
    batch: PredictionBatch, weights: ClassWeights, prob_floor: float = 1e-7
) -> LossGradient:
    if batch.logits is None:
        raise MissingLogits("gradients need a batch built from logits")
    if weights.alpha.shape != (batch.n_classes,):
        raise DimensionMismatch("class weight count does not match batch width")
    idx = np.arange(batch.n_samples)
    p_true = batch.probs[idx, batch.labels]
    inside = ((p_true > prob_floor) & (p_true < 1 - prob_floor)).astype(float)
    coef = (weights.alpha[batch.labels] * inside)[:, None]
    return LossGradient(coef * (batch.probs - batch.onehot()))
