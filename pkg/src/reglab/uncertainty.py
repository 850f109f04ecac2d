"""Gaussian prediction uncertainty: marginalized probabilities, the
uncertainty-aware focal loss, Gaussian KL, and the variational free energy.

A Gaussian over a probability leaks outside [0, 1], so the quantity
marginalized is the *clamped* probability ``clamp(p, floor, 1 - floor)``.
The expectation of the raw probability is just ``mu`` and would make the
uncertainty term a no-op; that reading is kept as ``marginalization="literal"``.

Clamping introduces kinks, and Gauss-Hermite rules converge slowly across
kinks (errors around 1e-4 at practical orders). Expectations are therefore
split at the clamp points: the two tails have closed forms in the normal CDF
and the interior is either closed form (first moment) or integrated
adaptively. ``gauss_hermite_expectation`` is kept for smooth integrands.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .core import ClassWeights, LossConfig, PredictionBatch, SampleGeometry, _frozen
from .errors import DimensionMismatch, MissingLogits, NonPositiveVariance
from .losses import (
    LossGradient,
    LossValue,
    clamp_probs,
    focal_terms,
    refinement_term,
    softmax_chain,
    target_mask,
)

_SQRT2PI = np.sqrt(2.0 * np.pi)
# interior integration window, in standard deviations
_WINDOW = 12.0


@dataclass(frozen=True)
class VariationalState:
    mu: np.ndarray
    sigma_sq: np.ndarray

    def __post_init__(self):
        mu = _frozen(self.mu)
        var = _frozen(np.broadcast_to(np.asarray(self.sigma_sq, dtype=float), mu.shape))
        if not np.all(np.isfinite(mu)):
            raise ValueError("variational means must be finite")
        if not np.all(np.isfinite(var)) or np.any(var < 0):
            raise NonPositiveVariance("variances must be finite and non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_sq", var)

    @classmethod
    def from_batch(cls, batch: PredictionBatch, sigma_sq: float) -> "VariationalState":
        return cls(batch.probs, np.full(batch.probs.shape, float(sigma_sq)))

    @classmethod
    def default_prior(cls, shape) -> "VariationalState":
        """N(1/C, 0.25) for every entry."""
        n, c = shape
        return cls(np.full(shape, 1.0 / c), np.full(shape, 0.25))


@lru_cache(maxsize=None)
def hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' nodes/weights: E[f(Z)], Z ~ N(0,1), is ``w @ f(x)``."""
    x, w = np.polynomial.hermite.hermgauss(order)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def gauss_hermite_expectation(fn, mu, var, order: int = 32):
    """E[fn(X)] for X ~ N(mu, var), elementwise over broadcastable mu/var."""
    x, w = hermite_rule(order)
    mu = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    pts = mu[..., None] + sd[..., None] * x
    return (fn(pts) * w).sum(axis=-1)


def _norm_pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _tail_limits(mu, sd, floor):
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (floor - mu) / sd
        hi = (1.0 - floor - mu) / sd
    return lo, hi


def marginal_prob(mu, sigma_sq, prob_floor: float = 1e-7, method: str = "exact", order: int = 64):
    """E[clamp(p, floor, 1 - floor)] for p ~ N(mu, sigma_sq).

    ``method="exact"`` uses the truncated-normal first moment; ``"gauss-hermite"``
    applies a plain Hermite rule to the clamped integrand (inexact near the kinks).
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(sigma_sq, dtype=float)
    if np.any(var < 0):
        raise NonPositiveVariance("sigma_sq must be non-negative")
    a, b = prob_floor, 1.0 - prob_floor
    if method == "gauss-hermite":
        out = gauss_hermite_expectation(lambda p: np.clip(p, a, b), mu, var, order)
        return out if out.ndim else float(out)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")

    mu, var = np.broadcast_arrays(mu, var)
    sd = np.sqrt(var)
    out = np.array(np.clip(mu, a, b), dtype=float)
    pos = sd > 0
    if np.any(pos):
        m, s = mu[pos], sd[pos]
        lo, hi = _tail_limits(m, s, prob_floor)
        out[pos] = (
            a * ndtr(lo)
            + b * ndtr(-hi)
            + m * (ndtr(hi) - ndtr(lo))
            + s * (_norm_pdf(lo) - _norm_pdf(hi))
        )
    return out if out.ndim else float(out)


def marginal_prob_derivative(mu, sigma_sq, prob_floor: float = 1e-7):
    """d/dmu of :func:`marginal_prob`: the probability mass left unclamped."""
    mu, var = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(sigma_sq, dtype=float))
    sd = np.sqrt(var)
    out = np.array((mu > prob_floor) & (mu < 1.0 - prob_floor), dtype=float)
    pos = sd > 0
    if np.any(pos):
        lo, hi = _tail_limits(mu[pos], sd[pos], prob_floor)
        out[pos] = ndtr(hi) - ndtr(lo)
    return out


def _marginalize(mu, var, config: LossConfig, marginalization: str):
    if marginalization == "clamped":
        return marginal_prob(mu, var, config.prob_floor)
    if marginalization == "literal":
        # the expectation of an unclamped Gaussian variable is its mean
        return clamp_probs(gauss_hermite_expectation(lambda p: p, mu, var, 2), config.prob_floor)
    raise ValueError(f"unknown marginalization {marginalization!r}")


def reg_u_loss(
    state: VariationalState,
    labels,
    geometry: SampleGeometry | None,
    weights: ClassWeights,
    config: LossConfig,
    marginalization: str = "clamped",
) -> LossValue:
    """Focal loss at the marginalized probabilities, weighted by the refinement
    term. ``geometry=None`` turns the refinement off (g = 1)."""
    labels = np.asarray(labels, dtype=np.int64)
    shape = state.mu.shape
    if labels.shape != (shape[0],) or weights.alpha.shape != (shape[1],):
        raise DimensionMismatch("state, labels and weights disagree in shape")
    if geometry is not None and geometry.distances.shape != shape:
        raise DimensionMismatch("geometry shape does not match the state")
    p_hat = np.asarray(_marginalize(state.mu, state.sigma_sq, config, marginalization))
    g = 1.0 if geometry is None else refinement_term(geometry, config)
    h, _ = focal_terms(clamp_probs(p_hat, config.prob_floor), weights.alpha[None, :], g, config.gamma)
    return LossValue.from_per_sample((target_mask(labels, shape, config) * h).sum(axis=1))


def reg_u_gradient(
    batch: PredictionBatch, geometry: SampleGeometry, weights: ClassWeights, config: LossConfig
) -> LossGradient:
    """Gradient w.r.t. logits when the variational means are ``softmax(logits)``
    and every entry carries variance ``config.sigma_sq``."""
    if batch.logits is None:
        raise MissingLogits("gradients need a batch built from logits")
    if geometry.distances.shape != batch.probs.shape or weights.alpha.shape != (batch.n_classes,):
        raise DimensionMismatch("batch, geometry and weights disagree in shape")
    p = batch.probs
    p_hat = clamp_probs(marginal_prob(p, config.sigma_sq, config.prob_floor), config.prob_floor)
    g = refinement_term(geometry, config)
    _, dh = focal_terms(p_hat, weights.alpha[None, :], g, config.gamma)
    dmarg = marginal_prob_derivative(p, config.sigma_sq, config.prob_floor)
    v = target_mask(batch.labels, p.shape, config) * dh * dmarg * p
    return LossGradient(softmax_chain(p, v) / p.shape[0])


def gaussian_kl(q_mu, q_var, p_mu, p_var):
    """KL(N(q_mu, q_var) || N(p_mu, p_var)), elementwise."""
    q_mu, q_var, p_mu, p_var = (np.asarray(v, dtype=float) for v in (q_mu, q_var, p_mu, p_var))
    if np.any(q_var <= 0) or np.any(p_var <= 0):
        raise NonPositiveVariance("KL needs strictly positive variances")
    kl = 0.5 * np.log(p_var / q_var) + (q_var + (q_mu - p_mu) ** 2) / (2.0 * p_var) - 0.5
    # tiny negative values are round-off
    kl = np.maximum(kl, 0.0)
    return kl if kl.ndim else float(kl)


def expected_clamped(h, mu: float, var: float, prob_floor: float) -> float:
    """E[h(clamp(X))] for X ~ N(mu, var), with h smooth on [floor, 1 - floor]."""
    a, b = prob_floor, 1.0 - prob_floor
    if var == 0:
        return float(h(min(max(mu, a), b)))
    sd = np.sqrt(var)
    lo, hi = (a - mu) / sd, (b - mu) / sd
    total = h(a) * ndtr(lo) + h(b) * ndtr(-hi)
    left, right = max(a, mu - _WINDOW * sd), min(b, mu + _WINDOW * sd)
    if left < right:
        dens = lambda x: h(x) * np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * _SQRT2PI)
        pts = [mu] if left < mu < right else None
        val, _ = integrate.quad(dens, left, right, points=pts, limit=200, epsabs=1e-13, epsrel=1e-11)
        total += val
    return float(total)


def expected_reg_loss(
    state: VariationalState, labels, geometry: SampleGeometry, weights: ClassWeights, config: LossConfig
) -> float:
    """E_q[L_REG], integrating each entry's loss term under its own Gaussian."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = state.mu.shape
    g = refinement_term(geometry, config)
    mask = target_mask(labels, (n, c), config)
    total = 0.0
    for i in range(n):
        for k in range(c):
            if mask[i, k] == 0:
                continue
            alpha, gik = weights.alpha[k], g[i, k]
            h = lambda x, alpha=alpha, gik=gik: focal_terms(np.asarray(x, dtype=float), alpha, gik, config.gamma)[0]
            total += expected_clamped(h, state.mu[i, k], state.sigma_sq[i, k], config.prob_floor)
    return total / n


def free_energy(
    state: VariationalState,
    prior: VariationalState | None,
    labels,
    geometry: SampleGeometry,
    weights: ClassWeights,
    config: LossConfig,
) -> float:
    """E_q[L_REG] + sum of entrywise KL(q || prior); prior defaults to N(1/C, 0.25)."""
    if prior is None:
        prior = VariationalState.default_prior(state.mu.shape)
    labels = np.asarray(labels, dtype=np.int64)
    shape = state.mu.shape
    if prior.mu.shape != shape or geometry.distances.shape != shape or labels.shape != (shape[0],):
        raise DimensionMismatch("state, prior, labels and geometry disagree in shape")
    if weights.alpha.shape != (shape[1],):
        raise DimensionMismatch("class weight count does not match state width")
    if np.any(state.sigma_sq <= 0) or np.any(prior.sigma_sq <= 0):
        raise NonPositiveVariance("free energy needs strictly positive variances")
    kl = gaussian_kl(state.mu, state.sigma_sq, prior.mu, prior.sigma_sq)
    return expected_reg_loss(state, labels, geometry, weights, config) + float(np.sum(kl))
