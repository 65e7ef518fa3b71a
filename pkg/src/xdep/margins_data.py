"""Marginal transforms of raw observations to the uniform scale."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import DataError, ObservationMatrix, UniformMatrix
from .numerics import OptimizerConfig, hessian_fd, minimize

log = logging.getLogger(__name__)

XI_BOX = (-0.9, 2.0)
XI_ZERO = 1e-6
MIN_EXCESSES = 10


class DegenerateDataError(DataError):
    pass


@dataclass(frozen=True)
class GpdFit:
    sigma: float
    xi: float
    threshold: float = 0.0
    zeta: float = 1.0
    n_exceed: int = 0
    se: tuple | None = None
    loglik: float = math.nan

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("GPD scale must be positive")
        if not 0 < self.zeta <= 1:
            raise ValueError("exceedance probability must lie in (0, 1]")

    def surv(self, z):
        """Conditional survivor of the excess z >= 0."""
        z = np.maximum(np.asarray(z, float), 0.0)
        if abs(self.xi) < XI_ZERO:
            return np.exp(-z / self.sigma)
        base = np.maximum(1.0 + self.xi * z / self.sigma, 0.0)
        with np.errstate(divide="ignore"):
            return np.where(base > 0, base ** (-1.0 / self.xi), 0.0)

    def to_dict(self):
        return {"threshold": self.threshold, "sigma": self.sigma, "xi": self.xi,
                "zeta": self.zeta, "n_exceed": self.n_exceed,
                "se_sigma": None if self.se is None else self.se[0],
                "se_xi": None if self.se is None else self.se[1]}


def gpd_nll(sigma, xi, z):
    if sigma <= 0 or not XI_BOX[0] <= xi <= XI_BOX[1]:
        return math.inf
    if xi == 0.0:
        return z.size * math.log(sigma) + z.sum() / sigma
    w = xi * z / sigma
    if np.any(w <= -1.0):
        return math.inf
    # log1p keeps this smooth through xi = 0, which the Hessian stencil may straddle
    return z.size * math.log(sigma) + (1.0 + 1.0 / xi) * np.log1p(w).sum()


def fit_gpd(excesses, cfg: OptimizerConfig | None = None) -> GpdFit:
    """Maximum-likelihood GPD fit to positive excesses (Nelder-Mead on (log sigma, xi))."""
    z = np.asarray(excesses, float).ravel()
    if z.size < MIN_EXCESSES:
        raise DataError(f"need at least {MIN_EXCESSES} excesses for a GPD fit, got {z.size}")
    if np.any(z < 0) or not np.isfinite(z).all():
        raise DataError("excesses must be finite and non-negative")
    if np.ptp(z) == 0:
        raise DegenerateDataError("all excesses are identical; the GPD fit is degenerate")
    if z.size < 30:
        log.warning("only %d excesses; GPD estimates will be unstable", z.size)

    # method-of-moments start, clipped into the box
    m, v = z.mean(), z.var()
    xi0 = float(np.clip(0.5 * (1.0 - m * m / v), XI_BOX[0] + 0.05, 0.9))
    s0 = max(m * (1.0 - xi0), 1e-8 * m)
    if not np.isfinite(gpd_nll(s0, xi0, z)):
        xi0, s0 = 0.0, m

    cfg = cfg or OptimizerConfig(x_tol=1e-8, f_tol=1e-10, max_iters=2000)
    res = minimize(lambda p: gpd_nll(math.exp(p[0]), p[1], z), [math.log(s0), xi0], cfg)
    sigma, xi = math.exp(res.x[0]), float(res.x[1])

    se = None
    try:
        H = hessian_fd(lambda p: gpd_nll(p[0], p[1], z), np.array([sigma, xi]),
                       step=1e-4)
        cov = np.linalg.inv(H)
        if np.all(np.diag(cov) > 0):
            se = (float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])))
    except Exception:  # noqa: BLE001 - SEs are best-effort near the box edge
        se = None
    return GpdFit(sigma, xi, n_exceed=int(z.size), se=se, loglik=-res.fun)


def empirical_transform(Y) -> UniformMatrix:
    """Columnwise average ranks divided by n + 1."""
    v = np.asarray(getattr(Y, "values", Y), float)
    if v.ndim == 1:
        v = v[:, None]
    n = v.shape[0]
    if n < 2:
        raise DataError("need at least 2 observations for an empirical transform")
    return UniformMatrix(rankdata(v, axis=0) / (n + 1))


def semiparametric_transform(Y: ObservationMatrix, threshold_prob: float = 0.95):
    """Empirical CDF below the per-site threshold, fitted GPD tail above it.

    Returns the uniform matrix and one :class:`GpdFit` per site.
    """
    if not 0 < threshold_prob < 1:
        raise ValueError("threshold_prob must lie in (0, 1)")
    v = np.asarray(getattr(Y, "values", Y), float)
    ids = getattr(Y, "site_ids", tuple(f"s{j + 1}" for j in range(v.shape[1])))
    n, d = v.shape
    emp = rankdata(v, axis=0) / (n + 1)
    out = emp.copy()
    fits = []
    for j in range(d):
        col = v[:, j]
        thr = float(np.quantile(col, threshold_prob))
        above = col > thr
        try:
            fit = fit_gpd(col[above] - thr)
        except DataError as exc:
            raise type(exc)(f"site {ids[j]}: {exc}") from exc
        zeta = float(above.mean())
        fit = GpdFit(fit.sigma, fit.xi, thr, zeta, fit.n_exceed, fit.se, fit.loglik)
        fits.append(fit)
        tail = 1.0 - zeta * fit.surv(col[above] - thr)
        # keep strictly inside (0, 1) and never below the empirical splice value
        out[above, j] = np.clip(tail, 1.0 - zeta, np.nextafter(1.0, 0.0))
    return UniformMatrix(out), fits
