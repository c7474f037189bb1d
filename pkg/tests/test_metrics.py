import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualitymine.errors import MetricError, RiskError
from qualitymine.metrics import regression_metrics, risk_report

# values on a 1e-3 grid so squared differences cannot underflow
finite = st.integers(-10**6, 10**6).map(lambda i: i / 1000)
pairs = st.lists(st.tuples(finite, finite), min_size=2, max_size=30)


def test_perfect_prediction():
    m = regression_metrics([1, 2, 3], [1, 2, 3])
    assert (m.mse, m.rmse, m.mae) == (0, 0, 0)


def test_hand_values():
    m = regression_metrics([1, 2], [1, 4])
    assert m.mse == 2.0
    assert m.rmse == pytest.approx(math.sqrt(2), rel=1e-15)
    assert m.mae == 1.0
    assert m.n == 2


def test_metric_errors():
    with pytest.raises(MetricError):
        regression_metrics([1, 2], [1])
    with pytest.raises(MetricError):
        regression_metrics([], [])


def test_risk_of_squared_errors_0_and_4():
    r = risk_report([0, 2], [0, 0], "train")
    assert r.risk_estimate == 2.0
    assert r.standard_error == pytest.approx(2.0, rel=1e-15)
    assert r.split == "train"


def test_constant_error_has_zero_se():
    r = risk_report([1.5, 2.5, 3.5], [1, 2, 3], "test")
    assert r.risk_estimate == 0.25
    assert r.standard_error == 0


def test_risk_needs_two_rows():
    with pytest.raises(RiskError):
        risk_report([1], [1], "test")


@settings(max_examples=80, deadline=None)
@given(pairs)
def test_metric_invariants(rows):
    p, a = map(np.array, zip(*rows))
    m = regression_metrics(p, a)
    assert m.rmse == pytest.approx(math.sqrt(m.mse), rel=1e-12)
    assert m.mae <= m.rmse * (1 + 1e-12) + 1e-300
    r = risk_report(p, a, "train")
    assert r.risk_estimate == m.mse
    sq = (p - a) ** 2
    assert r.standard_error == pytest.approx(np.std(sq, ddof=1) / math.sqrt(len(sq)), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(pairs, st.randoms(use_true_random=False))
def test_permutation_invariance(rows, rnd):
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    m1 = regression_metrics(*map(np.array, zip(*rows)))
    m2 = regression_metrics(*map(np.array, zip(*shuffled)))
    assert m1.mse == pytest.approx(m2.mse, rel=1e-12, abs=1e-300)
    assert m1.mae == pytest.approx(m2.mae, rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(pairs, st.floats(-50, 50).filter(lambda s: abs(s) > 1e-3))
def test_scaling(rows, s):
    p, a = map(np.array, zip(*rows))
    m = regression_metrics(p, a)
    ms = regression_metrics(s * p, s * a)
    assert ms.mse == pytest.approx(s * s * m.mse, rel=1e-9, abs=1e-9)
    assert ms.rmse == pytest.approx(abs(s) * m.rmse, rel=1e-9, abs=1e-9)
    assert ms.mae == pytest.approx(abs(s) * m.mae, rel=1e-9, abs=1e-9)
