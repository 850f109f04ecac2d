"""Desk-scale optimizers: plain SGD, Riemannian SGD on the unit sphere,
proximal gradient with soft-thresholding, and a primal-dual solver for class
weights on the simplex.

Optimizer state is passed by value: every step returns a new
:class:`ParameterVector` whose ``t`` counts completed steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ClassWeights, LossConfig, PredictionBatch, _frozen
from .errors import ManifoldMismatch, NonFiniteObjective, ZeroNormAfterStep


class Manifold(enum.Enum):
    EUCLIDEAN = "euclidean"
    UNIT_SPHERE = "sphere"


class Decay(enum.Enum):
    CONSTANT = "constant"
    INVERSE_T = "inverse-t"


@dataclass(frozen=True)
class Schedule:
    eta_0: float
    decay: Decay = Decay.CONSTANT

    def __post_init__(self):
        if not self.eta_0 > 0:
            raise ValueError("eta_0 must be positive")
        object.__setattr__(self, "decay", Decay(self.decay))

    def rate(self, t: int) -> float:
        if self.decay is Decay.INVERSE_T:
            return self.eta_0 / (1.0 + t)
        return self.eta_0


@dataclass(frozen=True)
class ParameterVector:
    theta: np.ndarray
    manifold: Manifold = Manifold.EUCLIDEAN
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "manifold", Manifold(self.manifold))
        if self.manifold is Manifold.UNIT_SPHERE and abs(np.linalg.norm(self.theta) - 1.0) > 1e-9:
            raise ManifoldMismatch("sphere parameters must have unit norm")

    @classmethod
    def on_sphere(cls, theta) -> "ParameterVector":
        theta = np.asarray(theta, dtype=float)
        return cls(theta / np.linalg.norm(theta), Manifold.UNIT_SPHERE)


def _require(params: ParameterVector, manifold: Manifold):
    if params.manifold is not manifold:
        raise ManifoldMismatch(f"expected {manifold.value} parameters, got {params.manifold.value}")


def sgd_step(params: ParameterVector, grad, schedule: Schedule) -> ParameterVector:
    _require(params, Manifold.EUCLIDEAN)
    eta = schedule.rate(params.t)
    return ParameterVector(params.theta - eta * np.asarray(grad, dtype=float), params.manifold, params.t + 1)


def tangent_projection(theta, euclidean_grad) -> np.ndarray:
    """Riemannian gradient on the sphere: (I - theta theta^T) g."""
    g = np.asarray(euclidean_grad, dtype=float)
    return g - theta * (theta @ g)


def rsgd_step(params: ParameterVector, euclidean_grad, schedule: Schedule) -> ParameterVector:
    _require(params, Manifold.UNIT_SPHERE)
    riem = tangent_projection(params.theta, euclidean_grad)
    step = params.theta - schedule.rate(params.t) * riem
    norm = np.linalg.norm(step)
    if not np.isfinite(norm) or norm == 0.0:
        raise ZeroNormAfterStep("retraction undefined: step left the sphere's neighbourhood")
    return ParameterVector(step / norm, Manifold.UNIT_SPHERE, params.t + 1)


def prox_soft_threshold(theta, step: float, reg_strength: float) -> np.ndarray:
    """argmin_x ||x - theta||^2 / (2 step) + reg ||x||_1, elementwise."""
    if step <= 0 or reg_strength < 0:
        raise ValueError("need step > 0 and reg_strength >= 0")
    theta = np.asarray(theta, dtype=float)
    return np.sign(theta) * np.maximum(np.abs(theta) - step * reg_strength, 0.0)


def prox_gradient_step(params: ParameterVector, grad, schedule: Schedule, reg_strength: float) -> ParameterVector:
    _require(params, Manifold.EUCLIDEAN)
    eta = schedule.rate(params.t)
    moved = params.theta - eta * np.asarray(grad, dtype=float)
    return ParameterVector(prox_soft_threshold(moved, eta, reg_strength), params.manifold, params.t + 1)


# ---------------------------------------------------------------------------
# primal-dual

# objective(theta, alpha) -> (value, grad_theta, grad_alpha)
Objective = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray, np.ndarray]"]


class ConstraintForm(enum.Enum):
    # one multiplier on sum(alpha) = 1
    SUM = "sum"
    # one multiplier per class on alpha_c = 1/C
    PER_CLASS = "per-class"


@dataclass(frozen=True)
class DualState:
    alpha: np.ndarray
    lambda_c: np.ndarray
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    converged: bool = False
    trace: tuple = ()

    def __post_init__(self):
        for name in ("alpha", "lambda_c", "theta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.alpha.shape != self.lambda_c.shape:
            raise ValueError("alpha and lambda_c must have the same length")

    @classmethod
    def uniform(cls, n_classes: int, theta=None) -> "DualState":
        theta = np.zeros(0) if theta is None else theta
        return cls(np.full(n_classes, 1.0 / n_classes), np.zeros(n_classes), theta)

    @property
    def residual(self) -> float:
        return abs(float(self.alpha.sum()) - 1.0)


@dataclass(frozen=True)
class PrimalDualRecord:
    t: int
    objective: float
    residual: float


def primal_dual_solve(
    objective: Objective,
    init: DualState,
    schedule: Schedule,
    max_iters: int = 5000,
    tol: float = 1e-8,
    dual_schedule: Schedule | None = None,
    penalty: float = 1.0,
    constraint: ConstraintForm = ConstraintForm.SUM,
) -> DualState:
    """Alternating projected primal descent / dual ascent on the Lagrangian.

    Primal: ``(theta, alpha) -= eta * grad`` of the augmented Lagrangian, then
    ``alpha`` is projected onto ``alpha >= 0``. Dual: ``lambda += eta_dual *
    constraint residual``. ``penalty`` adds ``penalty/2 * ||residual||^2`` to the
    primal objective; without it descent-ascent cycles on objectives that are
    linear in ``alpha``. Stops once the constraint residual and the change in
    ``alpha`` are both below ``tol``; ``converged`` is False when
    ``max_iters`` ran out first.
    """
    constraint = ConstraintForm(constraint)
    dual_schedule = dual_schedule or schedule
    alpha = np.array(init.alpha, dtype=float)
    lam = np.array(init.lambda_c, dtype=float)
    theta = np.array(init.theta, dtype=float)
    n = alpha.size
    trace = []

    def residuals(a):
        if constraint is ConstraintForm.SUM:
            return np.full(n, a.sum() - 1.0)
        return a - 1.0 / n

    converged = False
    t = 0
    for t in range(max_iters):
        value, g_theta, g_alpha = objective(theta, alpha)
        if not np.isfinite(value):
            raise NonFiniteObjective(f"objective is {value} at iteration {t}")
        r = residuals(alpha)
        if constraint is ConstraintForm.SUM:
            # d/dalpha_c of lambda * (sum - 1) + penalty/2 (sum - 1)^2
            lag_alpha = lam[0] + penalty * r[0]
        else:
            lag_alpha = lam + penalty * r
        eta = schedule.rate(t)
        if theta.size:
            theta = theta - eta * np.asarray(g_theta, dtype=float)
        new_alpha = np.maximum(alpha - eta * (np.asarray(g_alpha, dtype=float) + lag_alpha), 0.0)
        moved = float(np.abs(new_alpha - alpha).max())
        alpha = new_alpha
        r = residuals(alpha)
        lam = lam + dual_schedule.rate(t) * r
        res = abs(float(alpha.sum()) - 1.0)
        trace.append(PrimalDualRecord(t, float(value), res))
        if res <= tol and moved <= tol:
            converged = True
            break
    return DualState(alpha, lam, theta, t + 1, converged, tuple(trace))


def simplex_grid(n_classes: int, resolution: float = 0.01):
    """Every alpha on the simplex whose entries are multiples of ``resolution``."""
    steps = int(round(1.0 / resolution))

    def rec(k, remaining):
        if k == 1:
            yield (remaining,)
            return
        for i in range(remaining + 1):
            for rest in rec(k - 1, remaining - i):
                yield (i, *rest)

    for combo in rec(n_classes, steps):
        yield np.array(combo, dtype=float) / steps


# ---------------------------------------------------------------------------
# toy problems shared by tests, scripts and the CLI


def toy_gfl_objective(batch: PredictionBatch, config: LossConfig) -> Objective:
    """GFL on a fixed batch as a function of the class weights alone.

    The loss is linear in ``alpha``: ``sum_c alpha_c A_c`` with ``A_c`` the
    unweighted focal loss mass of class ``c``.
    """
    from .losses import gfl

    per_class = np.zeros(batch.n_classes)
    unit = gfl(batch, ClassWeights.uniform(batch.n_classes), config).per_sample
    np.add.at(per_class, batch.labels, unit / batch.n_samples)

    def objective(theta, alpha):
        return float(per_class @ alpha), np.zeros_like(theta), per_class.copy()

    return objective


def quadratic_bowl(theta):
    theta = np.asarray(theta, dtype=float)
    return 0.5 * float(theta @ theta), theta.copy()


def sphere_linear(v):
    """-<theta, v> on the sphere; minimizer v / ||v||."""
    v = np.asarray(v, dtype=float)
    return lambda theta: (-float(theta @ v), -v)


@dataclass(frozen=True)
class LassoProblem:
    A: np.ndarray
    b: np.ndarray
    reg: float

    @classmethod
    def random(cls, seed: int = 0, n: int = 20, d: int = 5, reg: float = 0.5) -> "LassoProblem":
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, d))
        x_true = np.where(rng.random(d) < 0.5, 0.0, rng.normal(0.0, 2.0, d))
        b = A @ x_true + 0.1 * rng.normal(size=n)
        return cls(A, b, reg)

    def smooth(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r), self.A.T @ r

    def objective(self, x) -> float:
        return self.smooth(x)[0] + self.reg * float(np.abs(x).sum())

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.A, 2) ** 2)

