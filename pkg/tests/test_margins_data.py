import math

import numpy as np
import pytest
from scipy import stats

from xdep.core import DataError, ObservationMatrix
from xdep.margins_data import (DegenerateDataError, GpdFit, empirical_transform, fit_gpd,
                               gpd_nll, semiparametric_transform)


def test_exponential_excesses():
    z = np.random.default_rng(0).exponential(2.0, 10_000)
    fit = fit_gpd(z)
    assert abs(fit.sigma - 2.0) < 3 * fit.se[0]
    assert abs(fit.xi) < 3 * fit.se[1]


def test_gpd_shape_recovery():
    z = stats.genpareto.rvs(0.3, scale=1.0, size=10_000, random_state=1)
    fit = fit_gpd(z)
    assert abs(fit.xi - 0.3) < 3 * fit.se[1]
    assert abs(fit.sigma - 1.0) < 3 * fit.se[0]


def test_negative_shape_recovery():
    z = stats.genpareto.rvs(-0.2, scale=1.5, size=5000, random_state=2)
    fit = fit_gpd(z)
    assert abs(fit.xi + 0.2) < 3 * fit.se[1]


def test_matches_scipy_mle():
    z = stats.genpareto.rvs(0.15, scale=0.7, size=2000, random_state=3)
    fit = fit_gpd(z)
    xi, _, sigma = stats.genpareto.fit(z, floc=0)
    assert fit.xi == pytest.approx(xi, abs=2e-3)
    assert fit.sigma == pytest.approx(sigma, rel=2e-3)
    assert fit.loglik == pytest.approx(stats.genpareto.logpdf(z, xi, 0, sigma).sum(), abs=1e-3)


def test_repeated_value_is_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_gpd(np.full(50, 1.3))


def test_too_few_excesses():
    with pytest.raises(DataError, match="at least 10"):
        fit_gpd(np.arange(1.0, 6.0))


def test_few_excesses_warn(caplog):
    fit_gpd(np.random.default_rng(4).exponential(1.0, 15))
    assert "unstable" in caplog.text


def test_nll_outside_box_is_infinite():
    z = np.array([0.5, 1.0, 2.0])
    assert gpd_nll(1.0, 2.5, z) == math.inf
    assert gpd_nll(-1.0, 0.1, z) == math.inf
    assert gpd_nll(1.0, -0.9, z) == math.inf   # 1 + xi z / sigma <= 0 for z = 2


def test_nll_continuous_through_zero_shape():
    z = np.random.default_rng(5).exponential(1.0, 100)
    assert gpd_nll(1.2, 1e-9, z) == pytest.approx(gpd_nll(1.2, 0.0, z), rel=1e-8)


def test_survivor_forms():
    f = GpdFit(2.0, 0.0)
    assert f.surv(2.0) == pytest.approx(math.exp(-1))
    g = GpdFit(1.0, -0.5)
    assert g.surv(2.5) == 0.0
    h = GpdFit(1.0, 0.3)
    assert h.surv(1.0) == pytest.approx(stats.genpareto.sf(1.0, 0.3))
    with pytest.raises(ValueError):
        GpdFit(0.0, 0.1)


def test_empirical_examples():
    assert empirical_transform(np.array([[3.0], [1.0], [2.0]])).values.ravel().tolist() == [
        0.75, 0.25, 0.5]
    tied = empirical_transform(np.array([[1.0], [1.0]])).values.ravel()
    assert tied.tolist() == [0.5, 0.5]
    with pytest.raises(DataError):
        empirical_transform(np.array([[1.0]]))


def test_empirical_inside_unit_interval_and_invariant(rng):
    Y = rng.normal(size=(200, 3))
    U = empirical_transform(Y).values
    assert np.all((U > 0) & (U < 1))
    V = empirical_transform(np.column_stack([np.exp(Y[:, 0]), Y[:, 1] ** 3, 5 * Y[:, 2] + 2]))
    assert np.array_equal(U, V.values)


def _heavy_tailed(rng, n=4000, d=2):
    return ObservationMatrix(stats.genpareto.rvs(0.2, size=(n, d), random_state=rng) + 10.0,
                             tuple(f"site{j}" for j in range(d)))


def test_semiparametric_splice():
    rng = np.random.default_rng(6)
    Y = _heavy_tailed(rng)
    U, fits = semiparametric_transform(Y, 0.95)
    n = Y.values.shape[0]
    for j, fit in enumerate(fits):
        y = Y.values[:, j]
        below = y <= fit.threshold
        emp = stats.rankdata(y) / (n + 1)
        assert np.array_equal(U.values[below, j], emp[below])
        # continuity at the splice
        assert abs((1 - fit.zeta) - emp[below].max()) <= 1 / (n + 1) + 1e-12
        order = np.argsort(y)
        assert np.all(np.diff(U.values[order, j]) >= 0)
    assert np.all((U.values > 0) & (U.values < 1))
    assert fits[0].zeta == pytest.approx(0.05, abs=1 / n)


def test_semiparametric_tail_values():
    rng = np.random.default_rng(7)
    Y = _heavy_tailed(rng)
    U, fits = semiparametric_transform(Y, 0.9)
    fit = fits[1]
    y = Y.values[:, 1]
    i = int(np.argmax(y))
    z = y[i] - fit.threshold
    expected = 1 - fit.zeta * (1 + fit.xi * z / fit.sigma) ** (-1 / fit.xi)
    assert U.values[i, 1] == pytest.approx(expected, rel=1e-12)


def test_semiparametric_uniformity():
    rng = np.random.default_rng(8)
    Y = _heavy_tailed(rng, n=10_000)
    U, _ = semiparametric_transform(Y, 0.95)
    for j in range(2):
        assert stats.kstest(U.values[:, j], "uniform").pvalue > 0.01


def test_semiparametric_error_names_site():
    Y = ObservationMatrix(np.column_stack([np.arange(100.0), np.r_[np.zeros(90), np.full(10, 5.0)]]),
                          ("a", "b"))
    with pytest.raises(DataError, match="site b"):
        semiparametric_transform(Y, 0.9)


def test_threshold_probability_range():
    with pytest.raises(ValueError):
        semiparametric_transform(np.zeros((10, 1)), 1.0)
