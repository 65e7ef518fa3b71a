import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from xdep.core import SiteSet
from xdep.latent import (CapabilityError, DirichletLatent, GaussianLatent, dirichlet_V,
                         eta_w, exp_to_normal, latent_joint_cdf_exp, latent_joint_pdf_exp,
                         latent_partial_cdf_exp, latent_simulate, make_latent)


def gauss(rho):
    return GaussianLatent.from_correlation([[1, rho], [rho, 1]])


def angular_V(x1, x2, a, b):
    """Exponent function by quadrature of the Dirichlet angular density."""
    const = a * b * math.exp(special.gammaln(a + b + 1) - special.gammaln(a) - special.gammaln(b))

    def h(w):
        return const * (a * w) ** (a - 1) * (b * (1 - w)) ** (b - 1) / (a * w + b * (1 - w)) ** (a + b + 1)

    val, _ = integrate.quad(lambda w: max(w / x1, (1 - w) / x2) * h(w), 0, 1,
                            points=[x1 / (x1 + x2)], epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def one(v):
    return float(np.asarray(v).ravel()[0])


def test_exp_to_normal_tails():
    y = np.array([1e-300, 1e-8, 1.0, 30.0, 700.0])
    t = exp_to_normal(y)
    assert np.all(np.isfinite(t)) and np.all(np.diff(t) > 0)
    assert t[2] == pytest.approx(stats.norm.ppf(1 - math.exp(-1)), rel=1e-14)
    assert t[4] == pytest.approx(-stats.norm.ppf(math.exp(-700)), rel=1e-12)


@pytest.mark.parametrize("model", [gauss(0.6), gauss(-0.3), DirichletLatent(2.0, 0.5),
                                   DirichletLatent(1.0, 1.0)], ids=["g0.6", "g-0.3", "dir", "dir1"])
def test_margins_are_unit_exponential(model):
    for x in np.linspace(0, 10, 21):
        assert one(model.cdf([x, np.inf])) == pytest.approx(-math.expm1(-x), abs=1e-9)
        assert one(model.cdf([np.inf, x])) == pytest.approx(-math.expm1(-x), abs=1e-9)


def test_independence_values():
    assert one(latent_joint_cdf_exp([1.0, 1.0], gauss(0.0))) == pytest.approx(0.3995764, abs=1e-7)
    assert one(latent_joint_pdf_exp([1.0, 2.0], gauss(0.0))) == pytest.approx(math.exp(-3), rel=1e-12)
    assert one(latent_partial_cdf_exp([1.0, 1.0], [0], gauss(0.0))) == pytest.approx(0.2325442,
                                                                                      abs=1e-7)


def mixed_fd(F, x, h=1e-4):
    x1, x2 = x
    return (F([x1 + h, x2 + h]) - F([x1 + h, x2 - h]) - F([x1 - h, x2 + h])
            + F([x1 - h, x2 - h])) / (4 * h * h)


def test_gaussian_pdf_matches_mixed_difference():
    m = gauss(0.5)
    fd = mixed_fd(lambda z: one(m.cdf(z)), (1.0, 1.0))
    assert one(m.pdf([1.0, 1.0])) == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("ab", [(1.0, 1.0), (2.0, 0.5), (0.4, 3.0)])
def test_dirichlet_pdf_matches_mixed_difference(ab):
    m = DirichletLatent(*ab)
    for x in [(1.0, 1.0), (0.3, 2.0)]:
        fd = mixed_fd(lambda z: one(m.cdf(z)), x)
        assert one(m.pdf(list(x))) == pytest.approx(fd, rel=1e-5)


def test_gaussian_partial_matches_difference():
    m = gauss(0.5)
    h = 1e-5
    fd = (one(m.cdf([1 + h, 2.0])) - one(m.cdf([1 - h, 2.0]))) / (2 * h)
    assert one(m.partial_cdf([1.0, 2.0], [0])) == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("J", [[0], [1]])
def test_dirichlet_partials_match_difference(J):
    m = DirichletLatent(2.0, 0.5)
    x = np.array([0.8, 1.7])
    h = 1e-5
    e = np.zeros(2)
    e[J[0]] = h
    fd = (one(m.cdf(x + e)) - one(m.cdf(x - e))) / (2 * h)
    assert one(m.partial_cdf(x, J)) == pytest.approx(fd, rel=1e-6)


def test_gaussian_trivariate_partial_matches_difference():
    S = np.array([[1, 0.5, 0.3], [0.5, 1, 0.4], [0.3, 0.4, 1]])
    m = GaussianLatent.from_correlation(S)
    x = np.array([0.7, 1.4, 2.1])

    def F(y):
        t = exp_to_normal(np.asarray(y))
        return stats.multivariate_normal.cdf(t, np.zeros(3), S, maxpts=10**7, abseps=1e-13,
                                             releps=1e-13)

    h = 1e-3
    fd = (F(x + [h, 0, 0]) - F(x - [h, 0, 0])) / (2 * h)
    assert one(m.partial_cdf(x, [0])) == pytest.approx(fd, rel=1e-4)


def test_partial_limit_at_zero():
    # d/dy1 F at y1 = 0 is e^0 P(W2 <= y2 | W1 = 0); the conditional law
    # degenerates at the lower endpoint of W1
    assert one(gauss(0.0).partial_cdf([0.0, 1.0], [0])) == pytest.approx(1 - math.exp(-1),
                                                                          rel=1e-6)
    assert one(gauss(0.5).partial_cdf([0.0, 1.0], [0])) == pytest.approx(1.0, abs=1e-4)
    assert one(gauss(-0.5).partial_cdf([0.0, 1.0], [0])) == pytest.approx(0.0, abs=1e-4)


def test_partial_requires_proper_subset():
    with pytest.raises(ValueError):
        gauss(0.3).partial_cdf([1.0, 1.0], [])
    with pytest.raises(ValueError):
        gauss(0.3).partial_cdf([1.0, 1.0], [0, 1])


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        gauss(0.3).cdf([-0.1, 1.0])


def test_dirichlet_dimension_capability():
    with pytest.raises(CapabilityError):
        DirichletLatent(1.0, 1.0, d=3)
    with pytest.raises(CapabilityError):
        make_latent("dirichlet", (1.0, 1.0), d=3)


@pytest.mark.parametrize("ab", [(1.0, 1.0), (2.0, 0.5), (0.3, 4.0), (20.0, 20.0)])
def test_dirichlet_V_against_angular_quadrature(ab):
    for x in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)]:
        assert dirichlet_V(*x, *ab) == pytest.approx(angular_V(*x, *ab), rel=1e-8)


def test_dirichlet_V_properties(rng):
    for _ in range(30):
        a, b = rng.uniform(0.1, 10, 2)
        x1, x2 = rng.uniform(0.1, 5, 2)
        c = rng.uniform(0.2, 5)
        assert dirichlet_V(x1, x2, a, b) == pytest.approx(dirichlet_V(x2, x1, b, a), rel=1e-12)
        assert dirichlet_V(c * x1, c * x2, a, b) == pytest.approx(dirichlet_V(x1, x2, a, b) / c,
                                                                 rel=1e-12)
        assert dirichlet_V(x1, np.inf, a, b) == pytest.approx(1 / x1, rel=1e-14)
        theta = dirichlet_V(1.0, 1.0, a, b)
        assert 1 < theta <= 2


def test_dirichlet_survivor_limit():
    m = DirichletLatent(2.0, 0.5)
    # S(x1, inf) = e^{-x1} so F(x1, inf) = 1 - e^{-x1}
    assert one(m.cdf([1.3, np.inf])) == pytest.approx(1 - math.exp(-1.3), abs=1e-14)


def test_eta_values():
    assert eta_w(gauss(0.4)) == pytest.approx(0.7)
    assert eta_w(gauss(0.0)) == pytest.approx(0.5)
    etas = [DirichletLatent(a, a).eta_w() for a in (1, 10, 100, 1000)]
    assert np.all(np.diff(etas) > 0)
    assert 0.98 < etas[-1] < 1.0


def test_eta_from_sites():
    sites = SiteSet([[0, 0], [0.5, 0]])
    g = GaussianLatent.from_sites(sites, 0.5, 1.0)
    assert g.eta_w() == pytest.approx(0.5 * (1 + math.exp(-1)))
    assert g.eta_w_at(0.5) == pytest.approx(g.eta_w())


def test_gaussian_simulation_moments():
    n = 20000
    W = latent_simulate(n, gauss(0.0), seed=1)
    assert np.all(np.abs(W.mean(axis=0) - 1) < 3 / math.sqrt(n))
    assert abs(np.corrcoef(W.T)[0, 1]) < 3 / math.sqrt(n)
    close = GaussianLatent.from_sites(SiteSet([[0, 0], [1e-6, 0]]), 0.5, 1.0)
    W = latent_simulate(5000, close, seed=2)
    assert np.corrcoef(W.T)[0, 1] > 0.99


@pytest.mark.parametrize("ab", [(2.0, 0.5), (1.0, 1.0)])
def test_dirichlet_simulation_matches_cdf(ab):
    n = 40000
    m = DirichletLatent(*ab)
    W = latent_simulate(n, m, seed=3)
    for j in range(2):
        assert stats.kstest(W[:, j], "expon").pvalue > 1e-3
    for x in [(0.5, 0.5), (1.0, 2.0), (2.5, 2.5)]:
        p = one(m.cdf(list(x)))
        emp = np.mean((W[:, 0] <= x[0]) & (W[:, 1] <= x[1]))
        assert abs(emp - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_density_integrates_to_one_by_importance_sampling():
    rng = np.random.default_rng(4)
    n = 200000
    for m in (gauss(0.5), DirichletLatent(2.0, 0.5)):
        # proposal: independent Exp(1/2), heavier than the target in both tails
        y = rng.exponential(2.0, size=(n, 2))
        w = np.exp(m.log_partial(y, (0, 1))) / (0.25 * np.exp(-y.sum(axis=1) / 2))
        assert abs(w.mean() - 1) < 4 * w.std() / math.sqrt(n)
