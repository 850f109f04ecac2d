import numpy as np
import pytest

from reglab.core import ClassWeights, LossConfig, SampleGeometry
from reglab.errors import DimensionMismatch, DivergenceDetected, InfeasibleConfig
from reglab.optim import Schedule
from reglab.trainer import (
    DistanceModel,
    LossChoice,
    ToyModel,
    allocate,
    loss_and_param_grad,
    make_classification_task,
    per_class_error,
    rebalance_study,
    train,
)


def test_allocation():
    assert allocate(1000, [0.9, 0.1]).tolist() == [900, 100]
    assert allocate(10, [1 / 3, 1 / 3, 1 / 3]).sum() == 10


def test_imbalance_ratio():
    tr, te = make_classification_task([0.95, 0.05], 2000, 1000, 2, 2.0, 0)
    assert tr.imbalance_ratio == 19.0
    assert te.class_counts.tolist() == [950, 50]


def test_task_validation():
    with pytest.raises(InfeasibleConfig):
        make_classification_task([0.5, 0.6], 100, 100, 2, 1.0, 0)
    with pytest.raises(InfeasibleConfig):
        make_classification_task([0.999, 0.001], 100, 100, 2, 1.0, 0)


def test_separable_data_is_learned():
    data = make_classification_task([0.5, 0.3, 0.2], 600, 600, 3, 12.0, 1)
    report = train(ToyModel.zeros(3, 3), data, "ce", None, LossConfig(), Schedule(0.5), 200)
    assert 1 - per_class_error(report.model, data[1]).max() >= 0.99


def test_gamma_zero_focal_tracks_cross_entropy():
    data = make_classification_task([0.8, 0.2], 300, 100, 2, 2.0, 2)
    kw = dict(config=LossConfig(gamma=0.0), schedule=Schedule(0.3), epochs=50, record_trajectory=True)
    ce = train(ToyModel.zeros(2, 2), data, "ce", None, **kw)
    fl = train(ToyModel.zeros(2, 2), data, "gfl", ClassWeights.uniform(2), **kw)
    for (w1, b1), (w2, b2) in zip(ce.trajectory, fl.trajectory):
        assert np.abs(w1 - w2).max() <= 1e-9 and np.abs(b1 - b2).max() <= 1e-9


@pytest.mark.parametrize("choice", list(LossChoice))
def test_parameter_gradient(choice):
    rng = np.random.default_rng(0)
    tr, _ = make_classification_task([0.7, 0.2, 0.1], 30, 10, 2, 1.5, 0)
    model = ToyModel.random(2, 3, seed=1, scale=0.5)
    w = ClassWeights(np.array([1.0, 2.0, 3.0]))
    cfg = LossConfig(gamma=1.5, sigma_sq=0.01)
    geom = DistanceModel().sample(tr.labels, 3, rng)
    _, gW, gb = loss_and_param_grad(model, tr, choice, w, cfg, geom)
    h = 1e-6
    for idx in np.ndindex(model.weight_matrix.shape):
        Wp, Wm = model.weight_matrix.copy(), model.weight_matrix.copy()
        Wp[idx] += h
        Wm[idx] -= h
        fp = loss_and_param_grad(ToyModel(Wp, model.bias), tr, choice, w, cfg, geom)[0]
        fm = loss_and_param_grad(ToyModel(Wm, model.bias), tr, choice, w, cfg, geom)[0]
        assert gW[idx] == pytest.approx((fp - fm) / (2 * h), abs=1e-4)
    for k in range(3):
        bp, bm = model.bias.copy(), model.bias.copy()
        bp[k] += h
        bm[k] -= h
        fp = loss_and_param_grad(ToyModel(model.weight_matrix, bp), tr, choice, w, cfg, geom)[0]
        fm = loss_and_param_grad(ToyModel(model.weight_matrix, bm), tr, choice, w, cfg, geom)[0]
        assert gb[k] == pytest.approx((fp - fm) / (2 * h), abs=1e-4)


@pytest.mark.parametrize("choice", ["reg", "reg-u"])
def test_refinement_losses_train(choice):
    data = make_classification_task([0.8, 0.2], 400, 400, 2, 3.0, 3)
    report = train(ToyModel.zeros(2, 2), data, choice, None, LossConfig(sigma_sq=0.01), Schedule(1.0), 100)
    assert report.per_epoch[-1].loss < report.per_epoch[0].loss


def test_geometry_required():
    data = make_classification_task([0.5, 0.5], 10, 10, 2, 1.0, 0)
    with pytest.raises(DimensionMismatch):
        loss_and_param_grad(ToyModel.zeros(2, 2), data[0], "reg", ClassWeights.uniform(2), LossConfig())


def test_divergence():
    data = make_classification_task([0.5, 0.5], 50, 10, 2, 1e150, 0)
    with pytest.raises(DivergenceDetected), np.errstate(over="ignore", invalid="ignore"):
        train(ToyModel.zeros(2, 2), data, "ce", None, LossConfig(), Schedule(1e200), 5)


def test_report_serialization():
    data = make_classification_task([0.9, 0.1], 100, 100, 2, 2.0, 0)
    report = train(ToyModel.zeros(2, 2), data, "weighted-ce", None, LossConfig(), Schedule(0.5), 3)
    d = report.to_dict()
    assert [r["epoch"] for r in d["per_epoch"]] == [0, 1, 2]
    assert report.to_csv().splitlines()[0] == "epoch,loss,error_0,error_1"


def test_distance_model_geometry():
    g = DistanceModel(near=0.0, far=5.0, spread=0.0).sample(np.array([1, 0]), 2, np.random.default_rng(0))
    assert isinstance(g, SampleGeometry)
    assert g.distances.tolist() == [[5.0, 0.0], [0.0, 5.0]]


def test_rebalance_helps_minority():
    runs = rebalance_study(range(3), epochs=150)
    for r in runs:
        assert r.minority_recall["weighted-ce"] > r.minority_recall["ce"]


@pytest.mark.parametrize("seed", range(5))
def test_balanced_separated_accuracy(seed):
    data = make_classification_task([0.5, 0.5], 500, 500, 2, 8.0, seed)
    report = train(ToyModel.zeros(2, 2), data, "ce", None, LossConfig(), Schedule(0.5), 200)
    acc = np.mean(report.model.predict(data[1].features) == data[1].labels)
    assert acc >= 0.99
