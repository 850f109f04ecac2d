"""Linear-softmax classifier trained by full-batch gradient descent under any
of the lab's losses, on Gaussian-cluster data with controlled imbalance."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

from .core import AnnotationCounts, ClassWeights, LossConfig, PredictionBatch, SampleGeometry
from .errors import DimensionMismatch, DivergenceDetected, InfeasibleConfig
from .losses import gfl, gfl_gradient, reg_gradient, reg_loss
from .metrics import ConfusionTally, precision_recall_f1
from .optim import Schedule
from .rebalance import inverse_frequency_weights, rebalanced_cross_entropy, rebalanced_cross_entropy_gradient
from .uncertainty import VariationalState, reg_u_gradient, reg_u_loss


class LossChoice(enum.Enum):
    CE = "ce"
    WEIGHTED_CE = "weighted-ce"
    GFL = "gfl"
    REG = "reg"
    REG_U = "reg-u"


@dataclass(frozen=True)
class ClassificationData:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    @property
    def imbalance_ratio(self) -> float:
        counts = self.class_counts
        return float(counts.max() / counts.min())

    def annotation_counts(self) -> AnnotationCounts:
        return AnnotationCounts({str(c): int(n) for c, n in enumerate(self.class_counts)})


def allocate(n: int, proportions) -> np.ndarray:
    """Largest-remainder split of ``n`` items according to ``proportions``."""
    raw = n * np.asarray(proportions, dtype=float)
    counts = np.floor(raw).astype(int)
    remainder = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def _class_means(n_classes: int, dim: int, separation: float) -> np.ndarray:
    means = np.zeros((n_classes, dim))
    if dim >= n_classes:
        means[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
    elif dim >= 2:
        # regular polygon with side length ``separation``
        radius = separation / (2.0 * np.sin(np.pi / n_classes))
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0], means[:, 1] = radius * np.cos(angles), radius * np.sin(angles)
    else:
        means[:, 0] = separation * np.arange(n_classes)
    return means


def make_classification_task(
    class_proportions, n_train: int, n_test: int, feature_dim: int, separation: float, seed: int
) -> tuple[ClassificationData, ClassificationData]:
    props = np.asarray(class_proportions, dtype=float)
    if props.ndim != 1 or props.size < 2 or np.any(props <= 0) or abs(props.sum() - 1.0) > 1e-9:
        raise InfeasibleConfig("class proportions must be positive and sum to 1")
    if feature_dim < 1:
        raise InfeasibleConfig("feature_dim must be at least 1")
    train_counts, test_counts = allocate(n_train, props), allocate(n_test, props)
    if train_counts.min() < 1 or test_counts.min() < 1:
        raise InfeasibleConfig("every class needs at least one sample in each split")
    rng = np.random.default_rng(seed)
    means = _class_means(props.size, feature_dim, separation)

    def draw(counts):
        labels = np.repeat(np.arange(props.size), counts)
        features = means[labels] + rng.normal(size=(labels.size, feature_dim))
        perm = rng.permutation(labels.size)
        return ClassificationData(features[perm], labels[perm], props.size)

    return draw(train_counts), draw(test_counts)


@dataclass(frozen=True)
class ToyModel:
    weight_matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight_matrix, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise DimensionMismatch("weight matrix must be D x C and bias length C")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DivergenceDetected("model parameters are not finite")
        object.__setattr__(self, "weight_matrix", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def zeros(cls, feature_dim: int, n_classes: int) -> "ToyModel":
        return cls(np.zeros((feature_dim, n_classes)), np.zeros(n_classes))

    @classmethod
    def random(cls, feature_dim: int, n_classes: int, seed: int, scale: float = 0.01) -> "ToyModel":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, (feature_dim, n_classes)), np.zeros(n_classes))

    @property
    def feature_dim(self) -> int:
        return self.weight_matrix.shape[0]

    def logits(self, features) -> np.ndarray:
        return np.asarray(features) @ self.weight_matrix + self.bias

    def predict(self, features) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


@dataclass(frozen=True)
class DistanceModel:
    """Class-conditional distances used as refinement geometry: |N(near, spread)|
    for a sample's own class, |N(far, spread)| for every other class."""

    near: float = 0.5
    far: float = 3.0
    spread: float = 0.5

    def sample(self, labels, n_classes: int, rng: np.random.Generator) -> SampleGeometry:
        own = np.zeros((labels.size, n_classes), dtype=bool)
        own[np.arange(labels.size), labels] = True
        centers = np.where(own, self.near, self.far)
        return SampleGeometry(np.abs(centers + self.spread * rng.normal(size=centers.shape)))


def loss_and_logit_grad(
    logits, labels, choice: LossChoice, weights: ClassWeights, config: LossConfig, geometry: SampleGeometry | None
) -> tuple[float, np.ndarray]:
    choice = LossChoice(choice)
    labels = np.asarray(labels)
    n = labels.size
    if choice is LossChoice.CE:
        logp = log_softmax(logits, axis=1)
        onehot = np.zeros_like(logits)
        onehot[np.arange(n), labels] = 1.0
        return float(-logp[np.arange(n), labels].mean()), (np.exp(logp) - onehot) / n
    batch = PredictionBatch.from_logits(logits, labels)
    if choice is LossChoice.WEIGHTED_CE:
        # sum-form loss brought to the mean scale of the other losses
        value = rebalanced_cross_entropy(batch, weights, config.prob_floor).value / n
        return value, rebalanced_cross_entropy_gradient(batch, weights, config.prob_floor).d_logits / n
    if choice is LossChoice.GFL:
        return gfl(batch, weights, config).value, gfl_gradient(batch, weights, config).d_logits
    if geometry is None:
        raise DimensionMismatch(f"{choice.value} needs sample geometry")
    if choice is LossChoice.REG:
        return reg_loss(batch, geometry, weights, config).value, reg_gradient(batch, geometry, weights, config).d_logits
    state = VariationalState.from_batch(batch, config.sigma_sq)
    value = reg_u_loss(state, labels, geometry, weights, config).value
    return value, reg_u_gradient(batch, geometry, weights, config).d_logits


def loss_and_param_grad(model: ToyModel, data: ClassificationData, choice, weights, config, geometry=None):
    """Loss plus gradients w.r.t. (weight_matrix, bias)."""
    value, g = loss_and_logit_grad(model.logits(data.features), data.labels, choice, weights, config, geometry)
    return value, data.features.T @ g, g.sum(axis=0)


def per_class_error(model: ToyModel, data: ClassificationData) -> np.ndarray:
    pred = model.predict(data.features)
    err = np.zeros(data.n_classes)
    for c in range(data.n_classes):
        mask = data.labels == c
        err[c] = float(np.mean(pred[mask] != c)) if mask.any() else 0.0
    return err


def classification_metrics(model: ToyModel, data: ClassificationData) -> list[dict[str, float]]:
    pred = model.predict(data.features)
    out = []
    for c in range(data.n_classes):
        tally = ConfusionTally(
            tp=int(np.sum((pred == c) & (data.labels == c))),
            fp=int(np.sum((pred == c) & (data.labels != c))),
            fn=int(np.sum((pred != c) & (data.labels == c))),
        )
        p, r, f1 = precision_recall_f1(tally)
        out.append({"precision": p, "recall": r, "f1": f1})
    return out


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    per_class_error: tuple[float, ...]


@dataclass(frozen=True)
class TrainReport:
    per_epoch: tuple[EpochRecord, ...]
    final_metrics: tuple[dict, ...]
    model: ToyModel
    loss_choice: str = "ce"
    trajectory: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "loss_choice": self.loss_choice,
            "per_epoch": [
                {"epoch": r.epoch, "loss": r.loss, "per_class_error": list(r.per_class_error)} for r in self.per_epoch
            ],
            "final_metrics": {str(c): m for c, m in enumerate(self.final_metrics)},
        }

    def to_csv(self) -> str:
        n = len(self.per_epoch[0].per_class_error) if self.per_epoch else 0
        lines = ["epoch,loss," + ",".join(f"error_{c}" for c in range(n))]
        for r in self.per_epoch:
            lines.append(f"{r.epoch},{r.loss!r}," + ",".join(repr(e) for e in r.per_class_error))
        return "\n".join(lines) + "\n"


def train(
    model: ToyModel,
    data: tuple[ClassificationData, ClassificationData],
    loss_choice,
    weights: ClassWeights | None,
    config: LossConfig,
    schedule: Schedule,
    epochs: int,
    seed: int = 0,
    distance_model: DistanceModel | None = None,
    record_trajectory: bool = False,
) -> TrainReport:
    """Full-batch gradient descent; ``data`` is (train, test)."""
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    train_set, test_set = data
    choice = LossChoice(loss_choice)
    if train_set.features.shape[1] != model.feature_dim or train_set.n_classes != model.bias.size:
        raise DimensionMismatch("model and data dimensions disagree")
    if weights is None:
        weights = ClassWeights.uniform(train_set.n_classes)
    rng = np.random.default_rng(seed)
    geometry = None
    if choice in (LossChoice.REG, LossChoice.REG_U):
        geometry = (distance_model or DistanceModel()).sample(train_set.labels, train_set.n_classes, rng)

    W, b = model.weight_matrix.copy(), model.bias.copy()
    records, trajectory = [], []
    for epoch in range(epochs):
        current = ToyModel(W, b)
        value, gW, gb = loss_and_param_grad(current, train_set, choice, weights, config, geometry)
        if not np.isfinite(value):
            raise DivergenceDetected(f"loss became {value} at epoch {epoch}; lower the step size")
        records.append(EpochRecord(epoch, value, tuple(float(e) for e in per_class_error(current, train_set))))
        eta = schedule.rate(epoch)
        W = W - eta * gW
        b = b - eta * gb
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise DivergenceDetected(f"parameters diverged at epoch {epoch}; lower the step size")
        if record_trajectory:
            trajectory.append((W.copy(), b.copy()))
    final = ToyModel(W, b)
    return TrainReport(
        tuple(records), tuple(classification_metrics(final, test_set)), final, choice.value, tuple(trajectory)
    )


@dataclass(frozen=True)
class RebalanceRun:
    seed: int
    minority_recall: dict[str, float]
    error_variance: dict[str, float]


def rebalance_study(
    seeds,
    proportions=(0.95, 0.05),
    n_train: int = 2000,
    n_test: int = 2000,
    feature_dim: int = 2,
    separation: float = 2.0,
    epochs: int = 300,
    eta: float = 0.5,
) -> list[RebalanceRun]:
    """Train plain CE and inverse-frequency weighted CE on the same task per
    seed; report minority-class test recall and the variance of per-class test error."""
    runs = []
    config = LossConfig(gamma=0.0)
    for seed in seeds:
        data = make_classification_task(proportions, n_train, n_test, feature_dim, separation, seed)
        minority = int(np.argmin(data[0].class_counts))
        weights = inverse_frequency_weights(data[0].annotation_counts())
        recall, variance = {}, {}
        for choice, w in ((LossChoice.CE, None), (LossChoice.WEIGHTED_CE, weights)):
            report = train(
                ToyModel.zeros(feature_dim, len(proportions)), data, choice, w, config, Schedule(eta), epochs, seed
            )
            recall[choice.value] = report.final_metrics[minority]["recall"]
            variance[choice.value] = float(np.var(per_class_error(report.model, data[1])))
        runs.append(RebalanceRun(seed, recall, variance))
    return runs
