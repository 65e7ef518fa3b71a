"""Copula of X(s) = R^delta W(s)^(1-delta) via one-dimensional radial integrals.

On the log scale X~ = delta R~ + (1 - delta) W~ with R~ ~ Exp(1), so for any
index set J (possibly empty, possibly everything)

    d^|J| F_X~ / prod_J dx_j (x)
        = (1-delta)^{-|J|} int_0^{r*} F_{W~,J}{(x - delta r)/(1 - delta)} e^{-r} dr,

with r* = min_j x_j / delta. Dividing by the marginal densities of the
differentiated coordinates at x_j = F_X~^{-1}(u_j) turns this into the copula
CDF (J empty), a partial derivative, or the density (J full).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .gaussian import MVNAccuracy, lattice_shifts
from .latent import LatentModel
from .margins import log_pdf_exp, log_surv_exp, quantile_exp
from .numerics import QuadratureConfig, QuadratureError, integrate_batch

DELTA_LOW = 1e-6
DELTA_HIGH = 1.0 - 1e-6
_SCAN = 16
_TAIL_CUT = 100.0


@lru_cache(maxsize=200_000)
def _row_shift(seed: int, site: int, row: int, M: int, m: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, site, row]))
    return lattice_shifts(rng, M, m)


def row_shifts(seed, site, rows, M, m):
    """Lattice shifts for each data row, derived from (seed, call site, row)."""
    if m <= 0:
        return None
    return np.stack([_row_shift(int(seed), int(site), int(r), M, m) for r in rows])


def _normalise_J(J, d):
    J = tuple(sorted(set(int(j) for j in J)))
    if J and (J[0] < 0 or J[-1] >= d):
        raise ValueError(f"index set {J} out of range for dimension {d}")
    return J


@dataclass
class RadialResult:
    log_value: np.ndarray
    plan: tuple | None = None
    converged: np.ndarray | None = None
    errors: np.ndarray | None = None


@dataclass(eq=False)
class CopulaModel:
    delta: float
    latent: LatentModel
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    accuracy: MVNAccuracy = field(default_factory=lambda: MVNAccuracy(method="auto"))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        self.delta = float(self.delta)

    @property
    def d(self) -> int:
        return self.latent.d

    # ------------------------------------------------------------------
    # radial integral on the X~ scale
    def _needs_shifts(self, J):
        m = self.d - len(J)
        return m >= 3 or (m >= 2 and self.accuracy.method == "qmc")

    def log_joint(self, x, J=(), rows=None, call_site=0, plan=None, strict=True) -> RadialResult:
        """log of the J-partial of F_X~ at rows of ``x`` (shape (B, d)), delta in (0, 1)."""
        delta = self.delta
        x = np.atleast_2d(np.asarray(x, float))
        B, d = x.shape
        J = _normalise_J(J, d)
        nJ = len(J)
        rows = np.arange(B) if rows is None else np.asarray(rows)
        shifts = None
        if self._needs_shifts(J):
            shifts = row_shifts(self.seed, call_site, rows, self.accuracy.n_randomizations,
                                d - nJ - 1)
        one_m = 1.0 - delta
        rstar = x.min(axis=1) / delta
        growth = nJ * delta / one_m - 1.0
        r_up = rstar if growth >= -0.5 else np.minimum(rstar, _TAIL_CUT / -growth)
        log_rup = np.log(r_up)

        def log_h(owner, v, bound=False):
            r = r_up[owner][:, None] * v
            y = (x[owner][:, None, :] - delta * r[..., None]) / one_m
            sh = None
            if shifts is not None and not bound:
                sh = np.repeat(shifts[owner], v.shape[1], axis=0)
            lf = self.latent.log_partial(y.reshape(-1, d), J, self.accuracy, sh, bound=bound)
            return lf.reshape(v.shape) - r + log_rup[owner][:, None]

        if plan is None:
            vs = (np.arange(_SCAN) + 0.5) / _SCAN
            # the shift only guards against overflow, so an upper bound suffices
            scan = log_h(np.arange(B), np.broadcast_to(vs, (B, _SCAN)), bound=True)
            shift = np.max(scan, axis=1)
            shift = np.where(np.isfinite(shift), shift, 0.0)
            breaks = None
            if delta > 0.8:
                mode = vs[np.argmax(scan, axis=1)]
                breaks = np.column_stack([np.clip(mode - 0.5 / _SCAN, 0, 1),
                                          np.clip(mode + 0.5 / _SCAN, 0, 1)])
        else:
            shift = plan[3]

        def f(owner, v):
            with np.errstate(over="ignore"):
                return np.exp(log_h(owner, v) - shift[owner][:, None])

        if plan is None:
            res = integrate_batch(f, np.zeros(B), np.ones(B), self.quad, breaks=breaks)
        else:
            res = integrate_batch(f, None, None, self.quad, plan=plan[:3])
        if strict and not res.converged.all():
            i = int(np.flatnonzero(~res.converged)[0])
            owner, lo, hi = res.plan
            mine = owner == i
            k = np.argmin((hi - lo)[mine])
            raise QuadratureError(
                f"radial integral did not converge (delta={delta:.6g}, r*={rstar[i]:.6g}, "
                f"worst subinterval r in [{lo[mine][k] * r_up[i]:.6g}, {hi[mine][k] * r_up[i]:.6g}])",
                abscissa=float(lo[mine][k] * r_up[i]))
        with np.errstate(divide="ignore"):
            logv = shift + np.log(np.maximum(res.values, 0.0)) - nJ * np.log(one_m)
        return RadialResult(logv, (*res.plan, shift), res.converged, res.errors)

    # ------------------------------------------------------------------
    # copula scale
    def quantiles(self, u):
        return quantile_exp(u, self.delta)

    def log_copula(self, u, J=(), rows=None, call_site=0, plan=None, strict=True,
                   x=None) -> RadialResult:
        """log C_J(u) for rows of ``u``; J = () is the CDF, the full set the density."""
        u = np.atleast_2d(np.asarray(u, float))
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("copula arguments must lie strictly inside (0, 1)")
        B, d = u.shape
        if d != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {d}")
        J = _normalise_J(J, d)
        delta = self.delta
        if delta <= DELTA_LOW:
            y = -np.log1p(-u)
            lat = self.latent.log_partial(y, J, self.accuracy,
                                          row_shifts(self.seed, call_site, np.arange(B) if rows is None else rows,
                                                     self.accuracy.n_randomizations, d - len(J) - 1)
                                          if self._needs_shifts(J) else None)
            return RadialResult(lat + np.sum(y[:, list(J)], axis=1))
        if delta >= DELTA_HIGH:
            return RadialResult(_comonotone_log(u, J))
        if x is None:
            x = quantile_exp(u, delta)
        res = self.log_joint(x, J, rows=rows, call_site=call_site, plan=plan, strict=strict)
        if J:
            res.log_value = res.log_value - np.sum(log_pdf_exp(x[:, list(J)], delta), axis=1)
        return res

    def cdf(self, u):
        return np.exp(self.log_copula(u, ()).log_value)

    def pdf(self, u):
        return np.exp(self.log_copula(u, tuple(range(self.d))).log_value)

    def partial(self, u, J):
        J = _normalise_J(J, self.d)
        if not J or len(J) == self.d:
            raise ValueError("J must be a non-empty proper subset; use cdf or pdf")
        return np.exp(self.log_copula(u, J).log_value)

    def simulate(self, n, rng) -> np.ndarray:
        delta = self.delta
        r = rng.exponential(size=(n, 1))
        w = self.latent.simulate(n, rng)
        xt = delta * r + (1.0 - delta) * w
        u = -np.expm1(log_surv_exp(xt, delta))
        return np.clip(u, np.finfo(float).tiny, np.nextafter(1.0, 0.0))


def _comonotone_log(u, J):
    """log C_J for the comonotone copula min(u)."""
    with np.errstate(divide="ignore"):
        if not J:
            return np.log(u.min(axis=1))
        if len(J) > 1:
            return np.full(u.shape[0], -np.inf)
        j = J[0]
        others = np.delete(u, j, axis=1)
        return np.where(u[:, j] < others.min(axis=1), 0.0, -np.inf)


# ---------------------------------------------------------------------------
# functional surface

def copula_cdf(u, model: CopulaModel):
    out = model.cdf(u)
    return out if np.ndim(u) > 1 else float(out[0])


def copula_pdf(u, model: CopulaModel):
    out = model.pdf(u)
    return out if np.ndim(u) > 1 else float(out[0])


def copula_partial(u, J, model: CopulaModel):
    out = model.partial(u, J)
    return out if np.ndim(u) > 1 else float(out[0])


def simulate_uniform(n: int, model: CopulaModel, seed):
    from .core import UniformMatrix
    return UniformMatrix(model.simulate(int(n), np.random.default_rng(seed)))
