import dataclasses

import numpy as np
import pytest

import laadreg.bootstrap as bs
from laadreg.bootstrap import bootstrap_reserve, replicate_rng
from laadreg.errors import BootstrapError, InvalidArgumentError, NumericalFailureError
from laadreg.reserving import PUBLISHED_STRENGTH, build_design, fit_reserving, link_ratios, load_example


@pytest.fixture(scope="module")
def setup():
    tris, _ = load_example()
    return build_design(link_ratios(tris)), tris


def test_replicate_streams_are_independent_of_order():
    a = replicate_rng(5, 3).standard_normal(4)
    replicate_rng(5, 2).standard_normal(100)
    b = replicate_rng(5, 3).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, replicate_rng(5, 4).standard_normal(4))


def test_reproducible(setup):
    design, tris = setup
    a = bootstrap_reserve(design, tris, "laad", strength=PUBLISHED_STRENGTH, S=20, seed=9)
    b = bootstrap_reserve(design, tris, "laad", strength=PUBLISHED_STRENGTH, S=20, seed=9)
    for line in a:
        np.testing.assert_array_equal(a[line].replicates, b[line].replicates)
        assert a[line].mean == b[line].mean
    c = bootstrap_reserve(design, tris, "laad", strength=PUBLISHED_STRENGTH, S=20, seed=10)
    assert not np.array_equal(a["GL"].replicates, c["GL"].replicates)


def test_summary_fields(setup):
    design, tris = setup
    out = bootstrap_reserve(design, tris, "unconstrained", S=50, seed=1)
    s = out["GL"]
    assert s.replicates.size == 50 and s.n_failed == 0
    assert s.lower95 <= s.mean <= s.upper95
    assert s.lower95 == pytest.approx(np.percentile(s.replicates, 2.5))
    assert s.point_estimate == pytest.approx(915_495, rel=1e-3)


@pytest.mark.parametrize("model", ["unconstrained", "best"])
def test_zero_variance_collapses_to_point(setup, model):
    design, tris = setup
    base = dataclasses.replace(fit_reserving(design, model), sigma2_hat=0.0)
    out = bootstrap_reserve(design, tris, model, S=5, seed=0, base=base, sigma2="mle")
    for s in out.values():
        # refits see exactly the fitted values, so only the refit sigma2 (~0) differs
        np.testing.assert_allclose(s.replicates, s.point_estimate, rtol=1e-9)


def test_zero_variance_penalized_is_degenerate(setup):
    # a penalized refit of already shrunk fitted values shrinks again, so the
    # replicates agree with each other but sit below the point prediction
    design, tris = setup
    base = fit_reserving(design, "laad", strength=PUBLISHED_STRENGTH)
    base = dataclasses.replace(base, sigma2_hat=0.0)
    out = bootstrap_reserve(design, tris, "laad", S=4, seed=0, base=base)
    for s in out.values():
        assert np.ptp(s.replicates) == 0.0


def synthetic_triangle(noise, size=8, seed=0):
    from laadreg.reserving import LossTriangle

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((size, size))
    zeta = np.r_[0.0, np.log(np.linspace(1.8, 1.0, size - 1))]
    logs = np.log(1000.0) + np.cumsum(zeta + noise * z, axis=1)
    v = np.exp(logs)
    v[~LossTriangle.observed_mask(size, size)] = np.nan
    return LossTriangle("S", v)


def test_interval_widens_with_noise():
    widths = []
    for noise in [0.02, 0.05, 0.1]:
        tri = synthetic_triangle(noise)
        design = build_design(link_ratios([tri]))
        s = bootstrap_reserve(design, [tri], "unconstrained", S=300, seed=3)["S"]
        widths.append(s.upper95 - s.lower95)
    assert widths[0] < widths[1] < widths[2]


def test_too_many_failures_abort(setup, monkeypatch):
    design, tris = setup
    base = fit_reserving(design, "unconstrained")
    real = bs.fit_reserving
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] % 10 == 0:
            raise NumericalFailureError(1, "injected")
        return real(*args, **kwargs)

    monkeypatch.setattr(bs, "fit_reserving", flaky)
    with pytest.raises(BootstrapError):
        bootstrap_reserve(design, tris, "unconstrained", S=40, seed=0, base=base)


def test_few_failures_are_skipped(setup, monkeypatch):
    design, tris = setup
    base = fit_reserving(design, "unconstrained")
    real = bs.fit_reserving
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericalFailureError(1, "injected")
        return real(*args, **kwargs)

    monkeypatch.setattr(bs, "fit_reserving", flaky)
    out = bootstrap_reserve(design, tris, "unconstrained", S=40, seed=0, base=base)
    assert out["GL"].n_failed == 1 and out["GL"].replicates.size == 39


def test_invalid_count(setup):
    design, tris = setup
    with pytest.raises(InvalidArgumentError):
        bootstrap_reserve(design, tris, S=0)
