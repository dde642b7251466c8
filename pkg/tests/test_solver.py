import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laadreg import (
    Dataset,
    PenaltySpec,
    coordinate_descent,
    fixed_point_residual,
    forward_bic,
    normalize_columns,
    ols_fit,
    prox,
)
from laadreg.errors import DegenerateColumnError, InvalidArgumentError, RankDeficiencyError

KINDS = ["lasso", "scad", "mcp", "laad", "ridge"]


def random_data(n=60, p=5, seed=0, noise=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(2, p)] = [3.0, -2.0][: min(2, p)]
    y = X @ beta + noise * rng.standard_normal(n)
    return Dataset(X, y), beta


def test_normalize_columns():
    data = Dataset(np.array([[3.0, 0.0], [4.0, 2.0]]), np.array([1.0, 2.0]))
    norm, scale = normalize_columns(data)
    np.testing.assert_allclose(scale, [5.0, 2.0])
    np.testing.assert_allclose(norm.design, [[0.6, 0.0], [0.8, 1.0]])


def test_degenerate_column():
    data = Dataset(np.array([[1.0, 0.0], [2.0, 0.0]]), np.array([1.0, 2.0]))
    with pytest.raises(DegenerateColumnError):
        normalize_columns(data)
    with pytest.raises(DegenerateColumnError):
        coordinate_descent(data, PenaltySpec("lasso", 0.1))


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        Dataset(np.ones((3, 2)), np.ones(4))
    with pytest.raises(InvalidArgumentError):
        Dataset(np.array([[np.nan]]), np.ones(1))


@pytest.mark.parametrize("kind", KINDS)
def test_orthonormal_design_decouples(kind):
    # with an identity design each coefficient is the scalar prox of y_j
    y = np.array([3.0, -0.4, 1.2, -5.0])
    spec = PenaltySpec(kind, 0.8)
    fit = coordinate_descent(Dataset(np.eye(4), y), spec, init="zeros", tol=1e-14)
    expected = [prox(v, spec) for v in y]
    np.testing.assert_allclose(fit.coefficients, expected, atol=1e-12)


def test_ols_matches_lstsq():
    data, _ = random_data()
    fit = ols_fit(data)
    ref = np.linalg.lstsq(data.design, data.response, rcond=None)[0]
    np.testing.assert_allclose(fit.coefficients, ref, rtol=1e-10)
    assert fit.sigma2_hat == pytest.approx(fit.rss / data.n)
    assert ols_fit(data, sigma2="unbiased").sigma2_hat == pytest.approx(fit.rss / (data.n - data.p))


def test_rank_deficiency():
    data, _ = random_data()
    X = np.column_stack([data.design, data.design[:, 0] + data.design[:, 1]])
    with pytest.raises(RankDeficiencyError) as exc:
        ols_fit(Dataset(X, data.response))
    assert exc.value.dependent_columns


@pytest.mark.parametrize("kind", KINDS)
def test_vanishing_strength_recovers_ols(kind):
    data, _ = random_data()
    ref = ols_fit(data).coefficients
    fit = coordinate_descent(data, PenaltySpec(kind, 1e-10), tol=1e-12)
    np.testing.assert_allclose(fit.coefficients, ref, atol=1e-6)


def test_null_penalty_is_ols():
    data, _ = random_data()
    fit = coordinate_descent(data, PenaltySpec("none", 0.0), init="zeros", tol=1e-13)
    np.testing.assert_allclose(fit.coefficients, ols_fit(data).coefficients, atol=1e-8)


@pytest.mark.parametrize("kind", ["lasso", "scad", "mcp", "laad"])
def test_huge_strength_zeroes_everything(kind):
    data, _ = random_data()
    fit = coordinate_descent(data, PenaltySpec(kind, 1e6))
    assert fit.nnz == 0
    assert np.all(fit.coefficients == 0)


@pytest.mark.parametrize("kind", ["lasso", "laad"])
def test_zero_weight_columns_are_unpenalized(kind):
    data, _ = random_data()
    w = np.array([0.0, 1, 1, 1, 1])
    fit = coordinate_descent(data, PenaltySpec(kind, 1e6), weights=w)
    assert fit.coefficients[0] != 0
    assert np.all(fit.coefficients[1:] == 0)
    ref = ols_fit(data.subset_columns([0])).coefficients[0]
    assert fit.coefficients[0] == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("method", ["residual", "gram"])
def test_fixed_point_and_descent(kind, method):
    data, _ = random_data(n=80, p=6, seed=3)
    fit = coordinate_descent(data, PenaltySpec(kind, 0.5), tol=1e-12, method=method)
    assert fit.converged
    assert fixed_point_residual(data, fit) < 1e-9
    tr = fit.objective_trace
    # allow rounding noise of order 1e-12 relative to the objective
    assert np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1]))


@pytest.mark.parametrize("kind", KINDS)
def test_methods_agree(kind):
    data, _ = random_data(n=300, p=6, seed=5)
    a = coordinate_descent(data, PenaltySpec(kind, 0.3), tol=1e-12, method="residual")
    b = coordinate_descent(data, PenaltySpec(kind, 0.3), tol=1e-12, method="gram")
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-8)


@pytest.mark.parametrize("scaling", ["unit", "mean_square", "none"])
def test_scalings_and_back_transform(scaling):
    data, _ = random_data()
    fit = coordinate_descent(data, PenaltySpec("lasso", 0.2), scaling=scaling, tol=1e-12)
    np.testing.assert_allclose(fit.coefficients, fit.working_coefficients * fit.column_scale)
    np.testing.assert_allclose(fit.fitted, data.design @ fit.coefficients)
    assert fit.rss == pytest.approx(float(np.sum((data.response - fit.fitted) ** 2)))


def test_raw_scale_rejected_for_scad():
    data, _ = random_data()
    with pytest.raises(InvalidArgumentError):
        coordinate_descent(data, PenaltySpec("scad", 0.2), scaling="none")


def test_argument_checks():
    data, _ = random_data()
    with pytest.raises(InvalidArgumentError):
        coordinate_descent(data, PenaltySpec("lasso", 0.2), tol=0)
    with pytest.raises(InvalidArgumentError):
        coordinate_descent(data, PenaltySpec("lasso", 0.2), weights=[1, 1])
    with pytest.raises(InvalidArgumentError):
        coordinate_descent(data, PenaltySpec("lasso", 0.2), weights=[-1, 1, 1, 1, 1])
    with pytest.raises(InvalidArgumentError):
        coordinate_descent(data, PenaltySpec("lasso", 0.2), init="random")


def test_max_sweeps_reports_nonconvergence():
    data, _ = random_data()
    fit = coordinate_descent(data, PenaltySpec("laad", 0.5), init="zeros", max_sweeps=1, tol=1e-15)
    assert not fit.converged and fit.n_iter == 1


def test_forward_bic_picks_signal():
    data, beta = random_data(n=200, p=8, seed=11)
    fit = forward_bic(data)
    assert set(np.flatnonzero(fit.coefficients)) == set(np.flatnonzero(beta))


def test_forward_bic_always_in():
    data, _ = random_data(n=200, p=8, seed=11)
    fit = forward_bic(data, always_in=[7])
    assert fit.coefficients[7] != 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(KINDS), st.floats(0.01, 3.0))
def test_solution_is_coordinatewise_fixed_point(seed, kind, lam):
    data, _ = random_data(n=40, p=4, seed=seed)
    fit = coordinate_descent(data, PenaltySpec(kind, lam), tol=1e-12, max_sweeps=100_000)
    assert fit.converged
    assert fixed_point_residual(data, fit) < 1e-8
    tr = fit.objective_trace
    assert np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1]))
