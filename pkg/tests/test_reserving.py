import math

import numpy as np
import pytest

from laadreg.errors import DataError, InvalidArgumentError, InvalidStateError, RankDeficiencyError
from laadreg.reserving import (
    PUBLISHED_STRENGTH,
    DevFactorTable,
    LossTriangle,
    ReserveModel,
    actual_increments,
    build_design,
    fit_cross_classified,
    fit_reserving,
    link_ratios,
    load_example,
    predict_next_diagonal,
    read_diagonal_csv,
    read_triangles_csv,
    triangles_to_csv,
    validate,
)

# published unconstrained factors, lags 2..10
UNCONSTRAINED_GL = [2.2022, 1.5681, 1.3108, 1.1723, 1.1569, 1.0465, 1.0512, 1.0106, 1.0147]
UNCONSTRAINED_OC = [1.2975, 1.1052, 1.0792, 1.0352, 1.0298, 0.9959, 1.0024, 0.9929, 0.9589]


@pytest.fixture(scope="module")
def example():
    return load_example()


@pytest.fixture(scope="module")
def design(example):
    return build_design(link_ratios(example[0]))


def square(values, line="X"):
    v = np.array(values, dtype=float)
    mask = LossTriangle.observed_mask(*v.shape)
    v[~mask] = np.nan
    return LossTriangle(line, v)


class TestTriangles:
    def test_bundled_shape(self, example):
        tris, diag = example
        assert [t.line for t in tris] == ["GL", "OC"]
        assert all(t.values.shape == (10, 10) for t in tris)
        assert sum(1 for _ in tris[0].cells()) == 55
        assert set(diag["GL"]) == set(range(2, 11))

    def test_csv_round_trip(self, example):
        tris, _ = example
        text = triangles_to_csv(tris)
        again = read_triangles_csv(text)
        assert triangles_to_csv(again) == text
        for a, b in zip(tris, again):
            np.testing.assert_array_equal(a.values, b.values)

    def test_nonpositive_cell_named(self):
        with pytest.raises(DataError, match="accident_year=1, dev_lag=2"):
            square([[1.0, 0.0], [2.0, np.nan]])

    def test_missing_cell(self):
        text = "line,accident_year,dev_lag,cumulative_loss\nA,1,1,5\nA,1,2,6\n"
        with pytest.raises(DataError):
            read_triangles_csv(text)

    def test_malformed_csv(self):
        with pytest.raises(DataError):
            read_triangles_csv("line,accident_year,dev_lag\nA,1,1\n")
        with pytest.raises(DataError):
            read_triangles_csv("line,accident_year,dev_lag,cumulative_loss\nA,one,1,5\n")

    def test_trapezoid(self):
        v = np.full((4, 3), np.nan)
        mask = LossTriangle.observed_mask(4, 3)
        v[mask] = 1.0 + np.arange(mask.sum())
        tri = LossTriangle("T", v)
        lags, _ = tri.latest()
        assert lags.tolist() == [3, 3, 2, 1]
        lr = link_ratios([tri])
        assert len(lr) == 2 + 2 + 1


class TestLinkRatios:
    def test_reference_values(self, example):
        lr = link_ratios(example[0])
        assert len(lr) == 90
        first = (lr.line == 0) & (lr.accident_year == 1) & (lr.lag == 2)
        assert lr.value[first][0] == pytest.approx(0.51899570843913731, abs=1e-14)
        # the commonly quoted 0.51902 is a rounding of this value
        assert lr.value[first][0] == pytest.approx(0.51902, abs=1e-4)
        oc = (lr.line == 1) & (lr.accident_year == 1) & (lr.lag == 5)
        assert lr.value[oc][0] == pytest.approx(-0.05761427854720038, abs=1e-14)

    def test_ordering(self, example):
        lr = link_ratios(example[0])
        keys = list(zip(lr.line, lr.lag, lr.accident_year))
        assert keys == sorted(keys)

    def test_constant_rows_give_zero(self):
        tri = square(np.full((4, 4), 7.0))
        assert np.all(link_ratios([tri]).value == 0.0)

    def test_reconstruction(self, example):
        for n, tri in enumerate(example[0]):
            lr = link_ratios([tri])
            rebuilt = np.full(tri.values.shape, np.nan)
            rebuilt[:, 0] = tri.values[:, 0]
            for ay, lag, c in zip(lr.accident_year, lr.lag, lr.value):
                rebuilt[ay - 1, lag - 1] = rebuilt[ay - 1, lag - 2] * math.exp(c)
            np.testing.assert_allclose(rebuilt, tri.values, rtol=1e-13)


class TestDesign:
    def test_shape_and_exemption(self, design):
        assert design.dataset.design.shape == (90, 18)
        assert design.weights[design.eta2_column()] == 0
        assert np.count_nonzero(design.weights == 0) == 1

    def test_baseline_line_has_only_eta(self, design):
        lr = design.ratios
        row = np.flatnonzero((lr.line == 1) & (lr.lag == 3))[0]
        cols = np.flatnonzero(design.dataset.design[row])
        assert [design.coef_map[c] for c in cols] == [("eta", 3, None)]

    def test_single_line(self, example):
        d = build_design(link_ratios(example[0][:1]))
        assert d.dataset.p == 9
        assert all(kind == "eta" for kind, _, _ in d.coef_map)


class TestCrossClassified:
    def test_general_liability(self, example):
        gamma, alpha, delta = fit_cross_classified(example[0][0])
        assert gamma == pytest.approx(11.382, abs=1e-3)
        assert alpha[0] == pytest.approx(0.168, abs=1e-3)
        assert alpha[2] == pytest.approx(0.505, abs=1e-3)
        assert delta[0] == pytest.approx(0.789, abs=1e-3)
        assert delta[-1] == pytest.approx(1.936, abs=1e-3)

    def test_other_casualty(self, example):
        gamma, _, delta = fit_cross_classified(example[0][1])
        assert gamma == pytest.approx(12.173, abs=1e-3)
        assert delta[-1] == pytest.approx(0.432, abs=1e-3)

    def test_single_cell(self):
        gamma, alpha, delta = fit_cross_classified(LossTriangle("S", [[42.0]]))
        assert gamma == pytest.approx(math.log(42.0))
        assert alpha.size == 0 and delta.size == 0

    def test_single_lag_trapezoid(self):
        v = np.full((3, 1), 5.0)
        v[1, 0] = 6.0
        v[2, 0] = 9.0
        tri = LossTriangle("T", v)
        gamma, alpha, delta = fit_cross_classified(tri)
        assert delta.size == 0 and alpha.size == 2


class TestFits:
    def test_unconstrained_table(self, design):
        f = fit_reserving(design, "unconstrained")
        np.testing.assert_allclose(f.factors[0], UNCONSTRAINED_GL, atol=5e-4)
        np.testing.assert_allclose(f.factors[1], UNCONSTRAINED_OC, atol=5e-4)

    def test_unconstrained_is_geometric_mean(self, example, design):
        f = fit_reserving(design, "unconstrained")
        for n, tri in enumerate(example[0]):
            v = tri.values
            for lag in range(2, 11):
                ratios = v[:, lag - 1] / v[:, lag - 2]
                ratios = ratios[np.isfinite(ratios)]
                gm = math.exp(np.mean(np.log(ratios)))
                assert f.factor(n, lag) == pytest.approx(gm, rel=1e-12)

    @pytest.mark.parametrize("model", ["lasso", "scad", "mcp", "laad"])
    def test_zero_strength_nests_unconstrained(self, design, model):
        base = fit_reserving(design, "unconstrained").factors
        f = fit_reserving(design, model, strength=1e-12, tol=1e-13)
        np.testing.assert_allclose(f.factors, base, atol=1e-6)

    def test_laad_zero_pattern_and_exact_ones(self, design):
        f = fit_reserving(design, "laad", strength=PUBLISHED_STRENGTH)
        assert np.all(f.factors > 0)
        assert np.all(f.factors[0, 7:] == 1.0)
        assert np.all(f.factors[1, 5:] == 1.0)
        assert np.all(f.factors[0, :7] != 1.0)
        assert np.all(f.factors[1, :5] != 1.0)

    def test_best_pattern(self, design):
        f = fit_reserving(design, "best")
        assert np.all(f.factors[0, 5:] == 1.0)
        assert np.all(f.factors[1, 2:] == 1.0)
        assert f.factor("GL", 3) == pytest.approx(1.5681, abs=5e-4)

    def test_cv_selected_strength_is_near_published(self, design):
        f = fit_reserving(design, "laad", seed=0)
        assert PUBLISHED_STRENGTH / 5 <= f.strength <= PUBLISHED_STRENGTH * 5
        assert f.cv is not None

    def test_factor_lookup(self, design):
        f = fit_reserving(design, "unconstrained")
        with pytest.raises(InvalidStateError):
            f.factor("GL", 11)
        with pytest.raises(InvalidArgumentError):
            fit_reserving(design, "ridge")


class TestPrediction:
    def test_unconstrained_totals(self, example, design):
        tris, diag = example
        f = fit_reserving(design, "unconstrained")
        assert f.sigma2_hat == pytest.approx(0.0157, abs=1e-4)
        pred = predict_next_diagonal(tris, f)
        assert pred.incremental["GL"][-1] == pytest.approx(165_965, rel=1e-3)
        assert pred.totals["GL"] == pytest.approx(915_495, rel=1e-3)
        assert pred.totals["OC"] == pytest.approx(272_051, rel=1e-3)
        m = validate(pred, actual_increments(tris, diag))
        assert m["GL"][0] == pytest.approx(43_381.92, rel=1e-3)
        assert m["GL"][1] == pytest.approx(27_803.04, rel=1e-3)

    def test_zero_variance_unit_factor(self):
        tri = square([[10.0, 10.0], [20.0, np.nan]])
        f = DevFactorTable(("X",), (2,), np.zeros((1, 1)), 0.0, ReserveModel.LAAD)
        pred = predict_next_diagonal([tri], f)
        assert pred.incremental["X"].tolist() == [0.0]

    def test_variance_increases_predictions(self, example, design):
        f = fit_reserving(design, "laad", strength=PUBLISHED_STRENGTH)
        lo = predict_next_diagonal(example[0], f, sigma2=0.01)
        hi = predict_next_diagonal(example[0], f, sigma2=0.02)
        for line in lo.incremental:
            assert np.all(hi.incremental[line] > lo.incremental[line])

    def test_missing_lag(self, example):
        f = DevFactorTable(("GL", "OC"), (2,), np.zeros((2, 1)), 0.0, ReserveModel.LAAD)
        with pytest.raises(InvalidStateError):
            predict_next_diagonal(example[0], f)

    def test_validate(self):
        from laadreg.reserving import Prediction

        pred = Prediction(("A",), np.arange(2, 5), {}, {}, {"A": np.array([1.0, 2.0, 3.0])}, 0.0)
        assert validate(pred, {"A": [1.0, 2.0, 3.0]})["A"] == (0.0, 0.0)
        assert validate(pred, {"A": [2.0, 2.0, 3.0]})["A"] == pytest.approx((math.sqrt(1 / 3), 1 / 3))
        with pytest.raises(InvalidArgumentError):
            validate(pred, {"A": [1.0]})

    def test_diagonal_reader(self):
        d = read_diagonal_csv("line,accident_year,dev_lag,cumulative_loss\nA,2,2,10\n")
        assert d == {"A": {2: 10.0}}
