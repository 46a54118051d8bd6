"""
Testes do nanny (estimativa do erro sem referência).
"""

import numpy as np
import pytest

from eeatc.dataset import FeatureSpec, assemble_features, normalize_apply, normalize_fit, train_test_split
from eeatc.errors import EmptyInput, NegativeTargets, NotFitted, ShapeMismatch
from eeatc.metrics import mae
from eeatc.nanny import NannyModel, estimated_mae, nanny_estimate, nanny_fit
from eeatc.regress import ForestParams, LinearModel, mlr_fit, mlr_predict
from eeatc.synth import SynthConfig, generate

SMOOTH_NANNY = ForestParams(n_trees=30, min_samples_leaf=20, min_samples_split=40)


def test_zero_errors_give_zero_estimates(small_forest):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    y_hat_f = rng.normal(size=50)
    model = nanny_fit(X, y_hat_f, np.zeros(50), params=small_forest, seed=1)
    out = nanny_estimate(model, rng.normal(size=(20, 2)), rng.normal(size=20))
    assert np.all(out == 0.0)


def test_negative_targets_rejected(small_forest):
    with pytest.raises(NegativeTargets):
        nanny_fit(np.ones((3, 1)), np.zeros(3), [0.1, -0.1, 0.2], params=small_forest)


def test_shape_checks(small_forest):
    with pytest.raises(ShapeMismatch):
        nanny_fit(np.ones((3, 1)), np.zeros(2), np.zeros(3), params=small_forest)
    model = nanny_fit(np.arange(10.0).reshape(-1, 1), np.zeros(10), np.arange(10.0), params=small_forest)
    assert model.n_features == 1
    with pytest.raises(ShapeMismatch):
        nanny_estimate(model, np.ones((4, 2)), np.zeros(4))


def test_estimates_are_never_negative():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 2))
    # backbone linear extrapola abaixo de zero fora da faixa de treino
    e_a = np.abs(X[:, 0]) + 0.1
    model = nanny_fit(X, X[:, 1], e_a, backbone="mlr")
    assert isinstance(model.backbone, LinearModel)
    out = nanny_estimate(model, rng.normal(scale=10.0, size=(1000, 2)), rng.normal(scale=10.0, size=1000))
    assert out.min() >= 0.0


def test_not_fitted():
    with pytest.raises(NotFitted):
        nanny_estimate(NannyModel(LinearModel(), 1), np.ones((2, 1)), np.ones(2))


def test_estimated_mae():
    assert estimated_mae([0.0, 0.0, 0.0]) == 0.0
    assert estimated_mae([1.0, 2.0, 3.0]) == 2.0
    with pytest.raises(EmptyInput):
        estimated_mae([])


def _heteroscedastic_split():
    cfg = SynthConfig(n=2000, seed=3, b=0.0, sigma0=0.1, sigma1=0.1,
                      rh_mean=50.0, rh_diurnal=40.0, rh_noise=5.0, rh_range=(5.0, 95.0))
    records, _ = generate(cfg)
    ds = assemble_features(records, FeatureSpec(("s", "t", "rh")))
    train, test = train_test_split(ds, 0.75, seed=0)
    norm = normalize_fit(train)
    return normalize_apply(train, norm), normalize_apply(test, norm), train, test


def test_nanny_tracks_humidity_driven_noise():
    train, test, _, raw_test = _heteroscedastic_split()
    phase1 = mlr_fit(train.X, train.y)
    y_hat_f = mlr_predict(phase1, train.X)
    nanny = nanny_fit(train.X, y_hat_f, np.abs(train.y - y_hat_f), params=SMOOTH_NANNY, seed=2)

    e_hat = nanny_estimate(nanny, test.X, mlr_predict(phase1, test.X))
    corr = np.corrcoef(e_hat, raw_test.column("rh"))[0, 1]
    assert corr > 0.5

    true_mae = mae(mlr_predict(phase1, test.X), test.y)
    assert estimated_mae(e_hat) == pytest.approx(true_mae, rel=0.2)
