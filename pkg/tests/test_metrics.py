"""
Testes das métricas.
"""

import math

import numpy as np
import pytest

from eeatc.errors import ConstantTarget, EmptyInput, ShapeMismatch
from eeatc.dataset import NormParams
from eeatc.metrics import MetricPair, evaluate, mae, r2, rmse


def test_rmse_hand_arithmetic():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))


def test_rmse_symmetric_and_permutation_invariant():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    order = rng.permutation(50)
    assert rmse(a, b) == pytest.approx(rmse(b, a))
    assert rmse(a[order], b[order]) == pytest.approx(rmse(a, b))


def test_r2_reference_values():
    y = np.array([1.0, 2.0, 3.0])
    assert r2(y, y) == 1.0
    assert r2(np.full(3, y.mean()), y) == 0.0
    assert r2([0.0, 0.0, 0.0], y) == pytest.approx(-6.0)


def test_r2_constant_target():
    with pytest.raises(ConstantTarget):
        r2([1.0, 2.0], [3.0, 3.0])


def test_mae_and_jensen_bound():
    assert mae([1.0, 2.0], [3.0, 2.0]) == 1.0
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=30), rng.normal(size=30)
        assert mae(a, b) <= rmse(a, b) + 1e-15


def test_metrics_match_loop_oracle():
    rng = np.random.default_rng(2)
    y_hat, y = rng.normal(size=1000), rng.normal(size=1000)
    mean = sum(y) / len(y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, y_hat))
    ss_tot = sum((a - mean) ** 2 for a in y)
    assert rmse(y_hat, y) == pytest.approx(math.sqrt(ss_res / len(y)), abs=1e-12)
    assert r2(y_hat, y) == pytest.approx(1 - ss_res / ss_tot, abs=1e-12)


def test_metric_errors():
    with pytest.raises(ShapeMismatch):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInput):
        mae([], [])


def test_evaluate_in_raw_units():
    norm = NormParams({"y": (10.0, 2.0)})
    pair = evaluate([0.0, 1.0], [0.5, 1.0], norm=norm)
    assert pair.rmse == pytest.approx(2.0 * rmse([0.0, 1.0], [0.5, 1.0]))
    assert pair.n == 2
    assert isinstance(pair, MetricPair)
    assert MetricPair(0.82, 0.37, 100).meets_usepa
    assert not MetricPair(0.79, 0.37, 100).meets_usepa
