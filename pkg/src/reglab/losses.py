"""Generalized focal loss, spatial refinement weighting, and the joint
detection/segmentation objective, with analytic gradients w.r.t. logits.

Every loss here is a 1/N mean of per-sample sums over classes. By default only
the target class of each sample contributes (one-hot reading of the double
sum); ``LossConfig.all_class_sum`` switches to the literal sum over all
classes. Reductions use numpy's fixed-order summation, so results do not
depend on how callers split batches across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    ClassWeights,
    LossConfig,
    PredictionBatch,
    RefinementDirection,
    SampleGeometry,
)
from .errors import DimensionMismatch, MissingLogits


@dataclass(frozen=True)
class LossValue:
    value: float
    per_sample: np.ndarray

    @classmethod
    def from_per_sample(cls, per_sample) -> "LossValue":
        per_sample = np.asarray(per_sample, dtype=float)
        value = float(per_sample.mean()) if per_sample.size else 0.0
        return cls(value, per_sample)


@dataclass(frozen=True)
class LossGradient:
    d_logits: np.ndarray


def clamp_probs(p, floor: float) -> np.ndarray:
    return np.clip(p, floor, 1.0 - floor)


def refinement_term(geometry: SampleGeometry, config: LossConfig) -> np.ndarray:
    """Sigmoid weight g of each sample/class distance.

    ``FARTHER_IS_HEAVIER`` is ``1 / (1 + exp(-beta (d - delta)))``;
    ``CLOSER_IS_HEAVIER`` flips the sign so g falls as distance grows.
    """
    z = config.beta * (geometry.distances - config.delta)
    if config.refinement_direction is RefinementDirection.FARTHER_IS_HEAVIER:
        return expit(z)
    return expit(-z)


def focal_terms(q, alpha, g, gamma: float):
    """Entry loss h(q) = -alpha g (1-q)^gamma log q and its derivative dh/dq.

    ``q`` must already be clamped away from 0 and 1.
    """
    one_minus = 1.0 - q
    log_q = np.log(q)
    mod = one_minus**gamma
    h = -alpha * g * mod * log_q
    if gamma == 0:
        dmod = np.zeros_like(q)
    else:
        dmod = -gamma * one_minus ** (gamma - 1.0)
    dh = -alpha * g * (dmod * log_q + mod / q)
    return h, dh


def _check_shapes(batch: PredictionBatch, weights: ClassWeights, geometry: SampleGeometry | None = None):
    if weights.alpha.shape != (batch.n_classes,):
        raise DimensionMismatch(
            f"{weights.alpha.size} class weights for a batch with {batch.n_classes} classes"
        )
    if geometry is not None and geometry.distances.shape != batch.probs.shape:
        raise DimensionMismatch(
            f"geometry shape {geometry.distances.shape} does not match batch {batch.probs.shape}"
        )


def target_mask(labels, shape, config: LossConfig) -> np.ndarray:
    if config.all_class_sum:
        return np.ones(shape)
    mask = np.zeros(shape)
    mask[np.arange(shape[0]), labels] = 1.0
    return mask


def _weighted_focal(probs, labels, alpha, g, config: LossConfig) -> LossValue:
    q = clamp_probs(probs, config.prob_floor)
    h, _ = focal_terms(q, alpha[None, :], g, config.gamma)
    mask = target_mask(labels, q.shape, config)
    return LossValue.from_per_sample((mask * h).sum(axis=1))


def gfl(batch: PredictionBatch, weights: ClassWeights, config: LossConfig) -> LossValue:
    _check_shapes(batch, weights)
    return _weighted_focal(batch.probs, batch.labels, weights.alpha, 1.0, config)


# the segmentation loss has the same form, applied per pixel
gfl_segmentation = gfl


def reg_loss(
    batch: PredictionBatch, geometry: SampleGeometry, weights: ClassWeights, config: LossConfig
) -> LossValue:
    _check_shapes(batch, weights, geometry)
    g = refinement_term(geometry, config)
    return _weighted_focal(batch.probs, batch.labels, weights.alpha, g, config)


def mean_cross_entropy(batch: PredictionBatch, prob_floor: float = 1e-7) -> LossValue:
    p = clamp_probs(batch.probs[np.arange(batch.n_samples), batch.labels], prob_floor)
    return LossValue.from_per_sample(-np.log(p))


def joint_loss(det: LossValue, seg: LossValue, config: LossConfig) -> LossValue:
    """``det + lambda * seg``. The per-sample vector concatenates both tasks,
    with segmentation entries pre-scaled so the stored total stays additive."""
    if not (np.isfinite(det.value) and np.isfinite(seg.value)):
        raise ValueError("joint loss inputs must be finite")
    value = det.value + config.lambda_task * seg.value
    return LossValue(value, np.concatenate([det.per_sample, config.lambda_task * seg.per_sample]))


def softmax_chain(probs, v) -> np.ndarray:
    """Pull back v_ic = (dL/dp_ic) * p_ic through a row softmax: v - p * sum_c v."""
    return v - probs * v.sum(axis=1, keepdims=True)


def reg_gradient(
    batch: PredictionBatch, geometry: SampleGeometry, weights: ClassWeights, config: LossConfig
) -> LossGradient:
    """Analytic dL_REG/dlogits. The refinement weight is a constant here since
    it depends only on ground-truth geometry."""
    if batch.logits is None:
        raise MissingLogits("gradients need a batch built from logits")
    _check_shapes(batch, weights, geometry)
    g = refinement_term(geometry, config)
    return LossGradient(_focal_gradient(batch.probs, batch.labels, weights.alpha, g, config))


def gfl_gradient(batch: PredictionBatch, weights: ClassWeights, config: LossConfig) -> LossGradient:
    if batch.logits is None:
        raise MissingLogits("gradients need a batch built from logits")
    _check_shapes(batch, weights)
    return LossGradient(_focal_gradient(batch.probs, batch.labels, weights.alpha, 1.0, config))


def _focal_gradient(probs, labels, alpha, g, config: LossConfig) -> np.ndarray:
    floor = config.prob_floor
    q = clamp_probs(probs, floor)
    _, dh = focal_terms(q, alpha[None, :], g, config.gamma)
    # clamping is flat outside [floor, 1 - floor]
    inside = (probs > floor) & (probs < 1.0 - floor)
    v = target_mask(labels, probs.shape, config) * dh * inside * probs
    return softmax_chain(probs, v) / probs.shape[0]
