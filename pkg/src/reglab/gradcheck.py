"""Central finite-difference checks for the analytic logit gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassWeights, LossConfig, PredictionBatch, RefinementDirection, SampleGeometry
from .losses import gfl, gfl_gradient, reg_gradient, reg_loss
from .rebalance import rebalanced_cross_entropy, rebalanced_cross_entropy_gradient
from .uncertainty import VariationalState, reg_u_gradient, reg_u_loss

GAMMAS = (0.0, 0.5, 1.0, 2.0, 5.0)
SIGMA_SQS = (0.0, 0.01, 0.1)
LOSSES = ("gfl", "reg", "weighted-ce", "reg-u")


def finite_difference(fn, z: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp = z.copy()
        zm = z.copy()
        zp[idx] += h
        zm[idx] -= h
        grad[idx] = (fn(zp) - fn(zm)) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entrywise |a - n| / max(|a|, |n|, floor).

    The floor is 1e-3 of the gradient's largest entry (and at least 1e-8), so
    entries that are round-off sized compared with the rest are measured
    against the gradient's scale rather than against themselves.
    """
    a, n = np.abs(analytic), np.abs(numeric)
    floor = max(1e-3 * max(a.max(initial=0.0), n.max(initial=0.0)), 1e-8)
    denom = np.maximum(np.maximum(a, n), floor)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def loss_and_gradient(name: str, logits, labels, geometry, weights, config):
    """Return (loss-of-logits callable, analytic gradient at ``logits``)."""
    labels = np.asarray(labels)
    batch = PredictionBatch.from_logits(logits, labels)
    if name == "gfl":
        fn = lambda z: gfl(PredictionBatch.from_logits(z, labels), weights, config).value
        grad = gfl_gradient(batch, weights, config).d_logits
    elif name == "reg":
        fn = lambda z: reg_loss(PredictionBatch.from_logits(z, labels), geometry, weights, config).value
        grad = reg_gradient(batch, geometry, weights, config).d_logits
    elif name == "weighted-ce":
        fn = lambda z: rebalanced_cross_entropy(PredictionBatch.from_logits(z, labels), weights, config.prob_floor).value
        grad = rebalanced_cross_entropy_gradient(batch, weights, config.prob_floor).d_logits
    elif name == "reg-u":

        def fn(z):
            b = PredictionBatch.from_logits(z, labels)
            return reg_u_loss(VariationalState.from_batch(b, config.sigma_sq), labels, geometry, weights, config).value

        grad = reg_u_gradient(batch, geometry, weights, config).d_logits
    else:
        raise ValueError(f"unknown loss {name!r}")
    return fn, grad


@dataclass(frozen=True)
class GradCheckRecord:
    loss: str
    gamma: float
    direction: str
    sigma_sq: float
    all_class_sum: bool
    rel_error: float


def random_instance(rng: np.random.Generator, trial: int):
    n = int(rng.integers(2, 7))
    c = int(rng.integers(2, 6))
    logits = rng.normal(0.0, 2.0, size=(n, c))
    labels = rng.integers(0, c, size=n)
    geometry = SampleGeometry(rng.uniform(0.0, 4.0, size=(n, c)))
    weights = ClassWeights(rng.uniform(0.2, 5.0, size=c))
    config = LossConfig(
        gamma=GAMMAS[trial % len(GAMMAS)],
        beta=float(rng.uniform(0.5, 3.0)),
        delta=float(rng.uniform(0.0, 2.0)),
        sigma_sq=SIGMA_SQS[(trial // len(GAMMAS)) % len(SIGMA_SQS)],
        refinement_direction=(
            RefinementDirection.CLOSER_IS_HEAVIER if trial % 2 == 0 else RefinementDirection.FARTHER_IS_HEAVIER
        ),
        all_class_sum=bool(trial % 7 == 3),
    )
    return logits, labels, geometry, weights, config


def run_gradcheck(trials: int = 100, seed: int = 0, h: float = 1e-5, losses=LOSSES) -> list[GradCheckRecord]:
    rng = np.random.default_rng(seed)
    records = []
    for trial in range(trials):
        logits, labels, geometry, weights, config = random_instance(rng, trial)
        for name in losses:
            fn, grad = loss_and_gradient(name, logits, labels, geometry, weights, config)
            err = relative_error(grad, finite_difference(fn, logits, h))
            records.append(
                GradCheckRecord(
                    name, config.gamma, config.refinement_direction.value, config.sigma_sq, config.all_class_sum, err
                )
            )
    return records
