"""Extremal-dependence summaries: chi_u, chi, eta_X, extremal coefficients.

Model-based limits for delta > 1/2 use the representation

    chi^{1:d} = (2 delta - 1)/delta * E{min_j W_j^a},    a = (1 - delta)/delta,
    V(x)      = (2 delta - 1)/delta * E{max_j W_j^a / x_j},

estimated by Monte Carlo over the latent process. ``min_j W_j`` has a
Pareto-type tail with index 1/eta_W, so plain Monte Carlo has infinite
variance once 2a >= 1/eta_W. In that regime the latent sample is stretched
(W~ / kappa) and reweighted by the latent density ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .copula import CopulaModel
from .latent import DirichletLatent, LatentModel, dirichlet_V

MISSING = float("nan")


class NotDefinedError(ValueError):
    pass


# ---------------------------------------------------------------------------
# empirical

def empirical_chi_u(U, u: float, mode: str = "pairwise", pair=(0, 1), cond: int = 0) -> float:
    """Empirical chi_u.

    ``mode="pairwise"`` uses columns ``pair`` and conditions on the first;
    ``mode="dwise"`` requires all columns above ``u`` and conditions on
    column ``cond``. Returns NaN when nothing exceeds ``u`` in the
    conditioning column.
    """
    U = np.asarray(getattr(U, "values", U), float)
    if mode == "pairwise":
        j, k = pair
        above_c = U[:, j] > u
        joint = above_c & (U[:, k] > u)
    elif mode == "dwise":
        above_c = U[:, cond] > u
        joint = np.all(U > u, axis=1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n_c = int(above_c.sum())
    if n_c == 0:
        return MISSING
    return int(joint.sum()) / n_c


@dataclass
class ChiCurve:
    u_grid: np.ndarray
    values: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    counts: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.u_grid = np.asarray(self.u_grid, float)
        self.values = np.asarray(self.values, float)
        if np.any(np.diff(self.u_grid) <= 0):
            raise ValueError("u grid must be strictly increasing")

    def to_csv(self, path, header_lines=()):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["u", "estimate", "lo", "hi"])
            for i, u in enumerate(self.u_grid):
                lo = "" if self.lo is None else repr(float(self.lo[i]))
                hi = "" if self.hi is None else repr(float(self.hi[i]))
                w.writerow([repr(float(u)), repr(float(self.values[i])), lo, hi])


def empirical_chi_curve(U, u_grid, mode="pairwise", pair=(0, 1), cond=0, level=0.95) -> ChiCurve:
    """chi_u over a grid with Wilson binomial bands."""
    U = np.asarray(getattr(U, "values", U), float)
    u_grid = np.asarray(u_grid, float)
    vals, lo, hi, cnt = [], [], [], []
    z = stats.norm.ppf(0.5 + level / 2)
    for u in u_grid:
        if mode == "pairwise":
            c = U[:, pair[0]] > u
            jt = c & (U[:, pair[1]] > u)
        else:
            c = U[:, cond] > u
            jt = np.all(U > u, axis=1)
        m, k = int(c.sum()), int(jt.sum())
        cnt.append(m)
        if m == 0:
            vals.append(MISSING); lo.append(MISSING); hi.append(MISSING)
            continue
        p = k / m
        den = 1 + z * z / m
        centre = (p + z * z / (2 * m)) / den
        half = z * math.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / den
        vals.append(p); lo.append(max(0.0, centre - half)); hi.append(min(1.0, centre + half))
    return ChiCurve(u_grid, np.array(vals), np.array(lo), np.array(hi), np.array(cnt), "empirical")


def exceedance_count_distribution(U, u: float) -> np.ndarray:
    """Distribution of the number of sites above ``u`` given at least one is.

    Returns an array p where p[k-1] is the proportion of time points with
    exactly k exceedances among those with at least one.
    """
    U = np.asarray(getattr(U, "values", U), float)
    k = np.sum(U > u, axis=1)
    k = k[k > 0]
    d = U.shape[1]
    if k.size == 0:
        return np.full(d, MISSING)
    return np.bincount(k, minlength=d + 1)[1:] / k.size


# ---------------------------------------------------------------------------
# model-based

def model_eta(delta: float, eta_w: float) -> float:
    """Coefficient of tail dependence of X for a latent with coefficient eta_w."""
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if not 0 < eta_w < 1:
        raise ValueError("eta_w must lie in (0, 1)")
    if delta >= 0.5:
        return 1.0
    if delta > eta_w / (1 + eta_w):
        return delta / (1 - delta)
    return float(eta_w)


@dataclass
class MCEstimate:
    value: float
    se: float
    n: int
    method: str = "mc"


def _pair_eta(latent: LatentModel, idx) -> float:
    idx = list(idx)
    return max(latent.eta_w(j, k) for a, j in enumerate(idx) for k in idx[a + 1:])


def _latent_draws(latent, idx, a, n, rng, kappa, antithetic):
    """Return transformed W^a values (n, len(idx)) and importance weights."""
    if kappa is None:
        if antithetic and hasattr(latent, "corr"):
            from scipy import special
            half = (n + 1) // 2
            z = rng.standard_normal((half, latent.d)) @ latent.corr.chol.T
            z = np.concatenate([z, -z])[:n]
            w = -special.log_ndtr(-z)
        else:
            w = latent.simulate(n, rng)
        return np.exp(a * w[:, idx]), None
    x = latent.simulate(n, rng)
    y = x / kappa
    full = tuple(range(latent.d))
    logw = latent.log_partial(y, full) - latent.d * math.log(kappa) - latent.log_partial(x, full)
    return np.exp(a * y[:, idx]), np.exp(logw)


def _choose_kappa(latent, idx, a):
    eta = _pair_eta(latent, idx)
    # plain Monte Carlo variance of min W^a is finite iff 2a < 1/eta, and the
    # sample SE is already optimistic well before that boundary
    return None if 2 * a * eta < 0.25 else 0.5


def model_chi(delta: float, latent: LatentModel, n_mc: int = 100_000, seed=0,
              sites=None, kappa="auto", antithetic: bool = True) -> MCEstimate:
    """chi (pairwise for two indices, d-wise otherwise) by Monte Carlo.

    ``sites`` selects the coordinates (default: all of them).
    """
    if not 0 < delta < 1:
        if delta >= 1:
            return MCEstimate(1.0, 0.0, 0, "exact")
        raise ValueError("delta must lie in (0, 1)")
    if delta <= 0.5:
        return MCEstimate(0.0, 0.0, 0, "exact")
    idx = list(range(latent.d)) if sites is None else list(sites)
    a = (1 - delta) / delta
    rng = np.random.default_rng(seed)
    if kappa == "auto":
        kappa = _choose_kappa(latent, idx, a)
    vals, wts = _latent_draws(latent, idx, a, n_mc, rng, kappa, antithetic)
    m = vals.min(axis=1)
    c = (2 * delta - 1) / delta
    if wts is not None:
        s = c * m * wts
        return MCEstimate(float(s.mean()), float(s.std(ddof=1) / math.sqrt(n_mc)), n_mc, "importance")
    s = c * m
    if antithetic and hasattr(latent, "corr"):
        half = n_mc // 2
        pairs = 0.5 * (s[:half] + s[half:2 * half])
        return MCEstimate(float(s.mean()), float(pairs.std(ddof=1) / math.sqrt(half)), n_mc, "antithetic")
    return MCEstimate(float(s.mean()), float(s.std(ddof=1) / math.sqrt(n_mc)), n_mc, "mc")


def chi_inverted_max_stable(delta: float, eta_w: float) -> float:
    """Closed-form chi when W has an inverted max-stable copula."""
    if delta <= 0.5:
        return 0.0
    return (2 * delta - 1) / (1 - (1 - delta) * (1 + eta_w))


def model_chi_exact(delta: float, latent: LatentModel, pair=(0, 1)) -> float:
    """Exact chi for latents with a closed form (inverted max-stable, independence)."""
    if isinstance(latent, DirichletLatent):
        return chi_inverted_max_stable(delta, latent.eta_w())
    if hasattr(latent, "corr") and abs(latent.corr.sigma[pair[0], pair[1]]) < 1e-15:
        return chi_inverted_max_stable(delta, 0.5)
    raise NotDefinedError("no closed form for this latent; use model_chi")


def extremal_coeff(delta: float, latent: LatentModel, n_mc: int = 100_000, seed=0,
                   sites=None, x=None) -> MCEstimate:
    """V(x) over the selected sites (theta^{1:d} when x is all ones).

    Uses E{W^a} = delta/(2 delta - 1) as a control variate:
    V(x) = sum_j 1/x_j + c E{max_j W_j^a/x_j - sum_j W_j^a/x_j}.
    """
    if delta <= 0.5:
        raise NotDefinedError("the exponent function is defined for delta > 1/2 only")
    if delta >= 1:
        xs = np.ones(latent.d if sites is None else len(sites)) if x is None else np.asarray(x, float)
        return MCEstimate(float(np.max(1.0 / xs)), 0.0, 0, "exact")
    idx = list(range(latent.d)) if sites is None else list(sites)
    xs = np.ones(len(idx)) if x is None else np.asarray(x, float)
    a = (1 - delta) / delta
    rng = np.random.default_rng(seed)
    w = latent.simulate(n_mc, rng)[:, idx]
    p = np.exp(a * w) / xs
    c = (2 * delta - 1) / delta
    s = c * (p.max(axis=1) - p.sum(axis=1))
    return MCEstimate(float(np.sum(1.0 / xs) + s.mean()), float(s.std(ddof=1) / math.sqrt(n_mc)),
                      n_mc, "control-variate")


@dataclass
class RateCurve:
    u_grid: np.ndarray
    values: np.ndarray
    exponent: float


def chi_u_rate(delta: float, u_grid, chi: float) -> RateCurve:
    """Leading-order chi_u - chi for delta > 1/2."""
    if delta <= 0.5:
        raise NotDefinedError("for delta <= 1/2 the rate is governed by eta_X")
    u = np.asarray(u_grid, float)
    if delta >= 1:
        return RateCurve(u, np.zeros_like(u), math.inf)
    expo = (2 * delta - 1) / (1 - delta)
    const = chi * (1 - delta) / delta * (delta / (2 * delta - 1)) ** ((1 - 2 * delta) / (1 - delta))
    return RateCurve(u, const * (1 - u) ** expo, expo)


def model_chi_u_curve(copula: CopulaModel, u_grid, n_mc: int = 100_000, seed=0,
                      mode="pairwise", pair=(0, 1), cond=0, level=0.95) -> ChiCurve:
    """chi_u over ``u_grid`` by simulation from the fitted model."""
    U = copula.simulate(n_mc, np.random.default_rng(seed))
    curve = empirical_chi_curve(U, u_grid, mode=mode, pair=pair, cond=cond, level=level)
    curve.label = "model"
    return curve


def dirichlet_shapes_for_theta(theta: float) -> tuple:
    """Symmetric Dirichlet shapes alpha = beta giving extremal coefficient ``theta``."""
    if not 1 < theta < 2:
        raise ValueError("theta must lie in (1, 2)")
    f = lambda la: dirichlet_V(1.0, 1.0, math.exp(la), math.exp(la)) - theta
    la = optimize.brentq(f, -30, 30, xtol=1e-14)
    return math.exp(la), math.exp(la)
