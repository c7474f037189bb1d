import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from qualitymine.errors import DomainError, RankError
from qualitymine.numerics import (DesignMatrix, f_p_upper, regularized_incomplete_beta,
                                  solve_least_squares, t_p_two_sided)

special = pytest.importorskip("scipy.special")
stats = pytest.importorskip("scipy.stats")

shape = st.floats(0.05, 1e4)
unit = st.floats(0.0, 1.0)


def test_ones_column():
    sol = solve_least_squares(np.ones((3, 1)), [3, 3, 3], ["(intercept)"])
    assert sol.coef("(intercept)") == pytest.approx(3.0, abs=1e-15)
    np.testing.assert_allclose(sol.residuals, 0, atol=1e-15)
    assert sol.residual_df == 2


def test_exact_linear_fit(rng):
    X = np.c_[np.ones(30), rng.normal(size=(30, 3))]
    b = np.array([1.0, -2.0, 0.5, 3.0])
    sol = solve_least_squares(X, X @ b)
    np.testing.assert_allclose(sol.coefficients, b, atol=1e-12)
    assert np.max(np.abs(sol.residuals)) < 1e-12


def test_duplicate_column_is_named(rng):
    x = rng.normal(size=10)
    with pytest.raises(RankError) as err:
        solve_least_squares(np.c_[np.ones(10), x, x], rng.normal(size=10), ["c", "x", "x copy"])
    assert err.value.column == "x copy"


def test_too_few_rows():
    with pytest.raises(RankError):
        solve_least_squares(np.ones((2, 3)), [1, 2])


def test_labels_must_be_unique():
    with pytest.raises(ValueError):
        DesignMatrix(np.ones((3, 2)), ["a", "a"])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 8))
def test_matches_lstsq_and_residuals_are_orthogonal(seed, p):
    rng = np.random.default_rng(seed)
    n = p + int(rng.integers(2, 30))
    X = rng.normal(size=(n, p)) * 10.0 ** rng.uniform(-3, 3, size=p)
    y = rng.normal(size=n)
    sol = solve_least_squares(X, y)
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(X @ sol.coefficients, X @ ref, rtol=1e-9, atol=1e-9)
    r = sol.residuals
    for j in range(p):
        assert abs(X[:, j] @ r) <= 1e-9 * np.linalg.norm(X[:, j]) * max(np.linalg.norm(r), 1e-300)
    assert sol.residual_df == n - p
    assert sol.sigma2 == pytest.approx(r @ r / (n - p), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e4))
def test_column_scaling_invariance(seed, c):
    rng = np.random.default_rng(seed)
    X = np.c_[np.ones(20), rng.uniform(1500, 2729, 20), rng.uniform(0.45, 0.93, 20)]
    y = rng.normal(size=20)
    a = solve_least_squares(X, y).coefficients
    Xs = X.copy()
    Xs[:, 1] *= c
    b = solve_least_squares(Xs, y).coefficients
    np.testing.assert_allclose(b * [1, c, 1], a, rtol=1e-9)


def test_covariance_scale_matches_inverse_gram(rng):
    X = np.c_[np.ones(15), rng.normal(size=(15, 2))]
    sol = solve_least_squares(X, rng.normal(size=15))
    np.testing.assert_allclose(sol.covariance_scale, np.diag(np.linalg.inv(X.T @ X)), rtol=1e-10)


@pytest.mark.parametrize("x", [0.0, 0.5, 1.0])
def test_uniform_case(x):
    assert regularized_incomplete_beta(1, 1, x) == x


def test_closed_form_at_half():
    assert regularized_incomplete_beta(2, 2, 0.5) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(shape, shape, unit)
def test_incomplete_beta_matches_reference(a, b, x):
    assert regularized_incomplete_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(shape, shape, unit)
def test_incomplete_beta_symmetry(a, b, x):
    assume(1.0 - (1.0 - x) == x)  # 1 - x must be exact for the identity to be testable
    total = regularized_incomplete_beta(a, b, x) + regularized_incomplete_beta(b, a, 1 - x)
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("args", [(0, 1, 0.5), (1, -1, 0.5), (1, 1, 1.5), (1, 1, -0.1),
                                  (1, 1, float("nan"))])
def test_incomplete_beta_domain(args):
    with pytest.raises(DomainError):
        regularized_incomplete_beta(*args)


def test_t_table_values():
    assert t_p_two_sided(1.241, 5) == pytest.approx(0.269599, abs=1e-4)
    assert t_p_two_sided(24.454, 5) == pytest.approx(0.000002, abs=1e-6)
    assert t_p_two_sided(0, 5) == 1.0


def test_f_table_values():
    assert f_p_upper(2.46, 1, 5) == pytest.approx(0.177558, abs=1e-4)
    assert f_p_upper(0, 3, 7) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-60, 60), st.integers(1, 500))
def test_t_matches_reference(t, df):
    assert t_p_two_sided(t, df) == pytest.approx(2 * stats.t.sf(abs(t), df), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), st.integers(1, 300), st.integers(1, 300))
def test_f_matches_reference(F, d1, d2):
    assert f_p_upper(F, d1, d2) == pytest.approx(stats.f.sf(F, d1, d2), abs=1e-12)


def test_f_t_identity_on_random_pairs(rng):
    t = rng.normal(scale=5, size=1000)
    nu = rng.integers(1, 200, size=1000)
    gaps = [abs(f_p_upper(a * a, 1, v) - t_p_two_sided(a, v)) for a, v in zip(t, nu)]
    assert max(gaps) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50), st.integers(1, 60))
def test_p_values_decrease(a, b, df):
    assume(a < b)
    assert t_p_two_sided(b, df) <= t_p_two_sided(a, df)
    assert f_p_upper(b, 2, df) <= f_p_upper(a, 2, df)


def test_p_domain():
    with pytest.raises(DomainError):
        t_p_two_sided(1.0, 0)
    with pytest.raises(DomainError):
        f_p_upper(-1.0, 1, 5)
