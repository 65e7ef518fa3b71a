import math

import numpy as np
import pytest
from scipy import integrate, stats

from xdep.copula import CopulaModel
from xdep.dependence import (ChiCurve, NotDefinedError, chi_inverted_max_stable, chi_u_rate,
                             dirichlet_shapes_for_theta, empirical_chi_curve, empirical_chi_u,
                             exceedance_count_distribution, extremal_coeff, model_chi,
                             model_chi_exact, model_chi_u_curve, model_eta)
from xdep.latent import DirichletLatent, GaussianLatent


def gauss(rho):
    return GaussianLatent.from_correlation([[1, rho], [rho, 1]])


def chi_quadrature_oracle(delta, rho):
    """chi = (2 delta - 1)/delta * E{min(W1, W2)^a} with the expectation by quadrature.

    With W_j = 1/(1 - Phi(Z_j)) and exchangeable (Z1, Z2),
    E{min(W1, W2)^a} = 2 E{W1^a ; Z2 > Z1}
                     = 2 int phi(z) (1 - Phi(z))^(-a) (1 - Phi(z sqrt((1 - rho)/(1 + rho)))) dz.
    """
    a = (1 - delta) / delta
    c = math.sqrt((1 - rho) / (1 + rho))

    def f(z):
        return math.exp(stats.norm.logpdf(z) - a * stats.norm.logsf(z) + stats.norm.logsf(c * z))

    val, _ = integrate.quad(f, -40, 40, points=[0, 5, 10], limit=400, epsabs=1e-12,
                            epsrel=1e-10)
    return (2 * delta - 1) / delta * 2 * val


def test_comonotone_data():
    u = np.random.default_rng(0).random(1000)
    U = np.column_stack([u, u, u])
    for level in (0.5, 0.9, 0.99):
        assert empirical_chi_u(U, level) == 1.0
        assert empirical_chi_u(U, level, mode="dwise", cond=2) == 1.0


def test_independent_columns():
    n = 100_000
    U = np.random.default_rng(1).random((n, 2))
    est = empirical_chi_u(U, 0.95)
    m = np.sum(U[:, 0] > 0.95)
    assert abs(est - 0.05) < 3 * math.sqrt(0.05 * 0.95 / m)


def test_missing_when_nothing_exceeds():
    U = np.full((10, 2), 0.5)
    assert math.isnan(empirical_chi_u(U, 0.9))
    curve = empirical_chi_curve(U, [0.1, 0.9])
    assert curve.values[0] == 1.0 and math.isnan(curve.values[1])


def test_strict_inequality():
    U = np.array([[0.9, 0.9], [0.95, 0.95]])
    assert empirical_chi_u(U, 0.9) == 1.0
    assert empirical_chi_u(np.array([[0.9, 0.95], [0.95, 0.9]]), 0.9) == 0.0


def test_curve_bands_and_csv(tmp_path):
    U = np.random.default_rng(2).random((5000, 2))
    curve = empirical_chi_curve(U, [0.5, 0.8, 0.9])
    assert np.all(curve.lo <= curve.values) and np.all(curve.values <= curve.hi)
    curve.to_csv(tmp_path / "c.csv", header_lines=["test"])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "# test" and lines[1] == "u,estimate,lo,hi" and len(lines) == 5
    with pytest.raises(ValueError):
        ChiCurve([0.9, 0.8], [0.1, 0.2])


def test_exceedance_counts():
    U = np.array([[0.99, 0.1, 0.1], [0.99, 0.99, 0.1], [0.99, 0.99, 0.99], [0.1, 0.1, 0.1],
                  [0.1, 0.99, 0.1]])
    assert exceedance_count_distribution(U, 0.95).tolist() == [0.5, 0.25, 0.25]


def test_dwise_empirical_approaches_model():
    S = np.array([[1, 0.7, 0.5], [0.7, 1, 0.6], [0.5, 0.6, 1]])
    lat = GaussianLatent.from_correlation(S)
    U = CopulaModel(0.7, lat).simulate(1_000_000, np.random.default_rng(4))
    emp = empirical_chi_u(U, 0.999, mode="dwise", cond=0)
    m = np.sum(U[:, 0] > 0.999)
    mc = model_chi(0.7, lat, n_mc=200_000, seed=4)
    se = math.hypot(math.sqrt(emp * (1 - emp) / m), mc.se)
    assert abs(emp - mc.value) < 3 * se


def test_model_chi_asymptotic_independence():
    assert model_chi(0.5, gauss(0.5)).value == 0.0
    assert model_chi(0.3, gauss(0.5)).value == 0.0


def test_inverted_max_stable_closed_form():
    assert chi_inverted_max_stable(0.75, 0.5) == pytest.approx(0.8)
    # the independent Gaussian latent is also an inverted max-stable latent with eta = 1/2
    mc = model_chi(0.75, gauss(0.0), n_mc=200_000, seed=1)
    assert abs(mc.value - 0.8) < 3 * mc.se
    assert model_chi_exact(0.75, gauss(0.0)) == pytest.approx(0.8)


@pytest.mark.parametrize("delta", [0.6, 0.75, 0.9])
def test_dirichlet_chi_matches_closed_form(delta):
    lat = DirichletLatent(2.0, 0.5)
    mc = model_chi(delta, lat, n_mc=200_000, seed=2)
    assert abs(mc.value - model_chi_exact(delta, lat)) < 3 * mc.se


@pytest.mark.parametrize("delta,rho", [(0.6, 0.4), (0.75, 0.4), (0.9, 0.8), (0.6, 0.9)])
def test_gaussian_chi_matches_quadrature(delta, rho):
    mc = model_chi(delta, gauss(rho), n_mc=200_000, seed=5)
    assert abs(mc.value - chi_quadrature_oracle(delta, rho)) < 3 * mc.se


def test_chi_limits_and_bounds():
    assert model_chi(1.0, gauss(0.2)).value == 1.0
    assert model_chi(0.999, gauss(0.2), n_mc=20000).value == pytest.approx(1.0, abs=5e-3)
    prev = 0.0
    for delta in (0.55, 0.65, 0.75, 0.85, 0.95):
        mc = model_chi(delta, gauss(0.4), n_mc=100_000, seed=7)
        assert mc.value >= (2 * delta - 1) / delta - 3 * mc.se
        assert mc.value > 0 and mc.value >= prev - 3 * mc.se
        prev = mc.value


def test_dwise_below_pairwise():
    S = np.array([[1, 0.7, 0.5], [0.7, 1, 0.6], [0.5, 0.6, 1]])
    lat = GaussianLatent.from_correlation(S)
    d3 = model_chi(0.7, lat, n_mc=100_000, seed=8)
    for pair in [(0, 1), (0, 2), (1, 2)]:
        p = model_chi(0.7, lat, n_mc=100_000, seed=9, sites=pair)
        assert d3.value <= p.value + 3 * math.hypot(d3.se, p.se)


def test_model_eta_examples():
    assert model_eta(0.4, 0.5) == pytest.approx(2 / 3)
    assert model_eta(0.25, 0.5) == 0.5
    assert model_eta(0.5, 0.5) == 1.0


@pytest.mark.parametrize("eta_w", [0.5, 0.7, 0.95])
def test_model_eta_continuous_and_monotone(eta_w):
    grid = np.linspace(0, 1, 2001)
    vals = np.array([model_eta(d, eta_w) for d in grid])
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.max(np.abs(np.diff(vals))) < 5e-3


def test_extremal_coefficient():
    assert extremal_coeff(1.0, gauss(0.3)).value == 1.0
    near_one = extremal_coeff(0.999, gauss(0.3), n_mc=20000)
    assert near_one.value == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(NotDefinedError):
        extremal_coeff(0.5, gauss(0.3))
    thetas = [extremal_coeff(d, gauss(0.0), n_mc=100_000, seed=1).value
              for d in (0.9, 0.7, 0.6, 0.52)]
    assert np.all(np.diff(thetas) > 0)
    assert thetas[-1] > 1.85


def test_extremal_coefficient_inside_bounds():
    S = np.full((4, 4), 0.3) + 0.7 * np.eye(4)
    lat = GaussianLatent.from_correlation(S)
    for delta in (0.55, 0.7, 0.9):
        th = extremal_coeff(delta, lat, n_mc=50_000, seed=3)
        assert 1 - 3 * th.se <= th.value <= 4 + 3 * th.se


def test_extremal_coefficient_and_chi_agree_in_two_dimensions():
    # chi = 2 - theta for a bivariate exponent function
    lat = DirichletLatent(2.0, 0.5)
    th = extremal_coeff(0.7, lat, n_mc=200_000, seed=4)
    assert abs((2 - th.value) - model_chi_exact(0.7, lat)) < 3 * th.se


def test_chi_u_rate():
    r = chi_u_rate(2 / 3, [0.9, 0.99], 0.5)
    assert r.exponent == pytest.approx(1.0)
    assert chi_u_rate(0.999, [0.9], 0.9).exponent > 900
    r = chi_u_rate(0.8, [0.9, 0.99, 0.999999], 0.7)
    assert np.all(np.diff(r.values) < 0) and r.values[-1] < 1e-6
    with pytest.raises(NotDefinedError):
        chi_u_rate(0.5, [0.9], 0.0)


def test_chi_u_curves_order_in_delta():
    grid = [0.9, 0.95, 0.99, 0.999]
    hi = model_chi_u_curve(CopulaModel(0.9, gauss(0.4)), grid, n_mc=200_000, seed=1)
    lo = model_chi_u_curve(CopulaModel(0.1, gauss(0.4)), grid, n_mc=200_000, seed=1)
    assert np.all(hi.lo > lo.hi)
    assert hi.label == "model"


def test_small_delta_curve_tracks_latent_copula():
    grid = [0.9, 0.95, 0.99]
    lat = gauss(0.4)
    model = model_chi_u_curve(CopulaModel(1e-4, lat), grid, n_mc=200_000, seed=2)
    W = lat.simulate(200_000, np.random.default_rng(3))
    latent = empirical_chi_curve(-np.expm1(-W), grid)
    assert np.all(model.lo <= latent.hi) and np.all(latent.lo <= model.hi)


def test_comonotone_curve():
    curve = model_chi_u_curve(CopulaModel(1.0, gauss(0.4)), [0.9, 0.99], n_mc=10_000)
    assert np.all(curve.values == 1.0)


def test_dirichlet_shapes_for_theta():
    a, b = dirichlet_shapes_for_theta(1.5)
    assert a == b
    assert DirichletLatent(a, b).theta() == pytest.approx(1.5, abs=1e-10)
    with pytest.raises(ValueError):
        dirichlet_shapes_for_theta(2.0)
