"""Shared numerical kernels: adaptive quadrature, monotone inversion,
derivative-free minimization and finite-difference Hessians.

The quadrature routine integrates many integrals at once. Each round
evaluates a 15-point Gauss-Kronrod rule on every still-unresolved
subinterval of every integral in a single vectorised call, which is what
makes the copula likelihood affordable in pure numpy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    """Integrand returned NaN or the rule could not be applied."""

    def __init__(self, message: str, abscissa: float | None = None):
        super().__init__(message)
        self.abscissa = abscissa


class BracketError(ValueError):
    pass


class OptimizerFailure(RuntimeError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class StencilError(RuntimeError):
    def __init__(self, message: str, point: np.ndarray):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 400
    x_tol: float = 1e-4
    f_tol: float = 1e-6
    restarts: int = 0
    restart_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (self.x_tol > 0 and self.f_tol > 0):
            raise ValueError("optimizer tolerances must be positive")
        if self.restarts < 0 or self.max_iters < 1:
            raise ValueError("restarts must be >= 0 and max_iters >= 1")


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_SPLIT_FRACTION = 0.25

# Gauss weights aligned with KRONROD_NODES (zero on Kronrod-only nodes).
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]


@dataclass
class QuadResult:
    value: float
    error: float
    converged: bool
    n_intervals: int


@dataclass
class BatchQuadResult:
    values: np.ndarray
    errors: np.ndarray
    converged: np.ndarray
    # final partition: owner index and interval endpoints, reusable as a frozen plan
    plan: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False, default=None)


def _gk15(f, owner, a, b):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = center[:, None] + half[:, None] * KRONROD_NODES[None, :]
    fx = np.asarray(f(owner, x), dtype=float)
    if fx.shape != x.shape:
        raise QuadratureError(f"integrand returned shape {fx.shape}, expected {x.shape}")
    bad = np.isnan(fx)
    if bad.any():
        k = np.argwhere(bad)[0]
        xa = float(x[k[0], k[1]])
        raise QuadratureError(f"integrand returned NaN at x={xa!r}", abscissa=xa)
    resk = half * (fx @ KRONROD_WEIGHTS)
    resg = half * (fx @ GAUSS_WEIGHTS)
    # QUADPACK error scaling
    mean = 0.5 * resk / np.where(half == 0, 1.0, half)
    resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ KRONROD_WEIGHTS)
    err = np.abs(resk - resg)
    use = (resasc != 0) & (err != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where(use, scaled, err)
    return resk, err


def integrate_batch(f, a, b, cfg: QuadratureConfig = QuadratureConfig(), breaks=None,
                    plan=None) -> BatchQuadResult:
    """Adaptively integrate ``n`` integrals simultaneously.

    Parameters
    ----------
    f : callable
        ``f(owner, x)`` with ``owner`` an int array of shape (m,) naming
        the integral each row belongs to and ``x`` of shape (m, 15); returns
        integrand values of the same shape as ``x``.
    a, b : array_like, shape (n,)
        Integration limits, ``a < b``.
    breaks : array_like, shape (n, k), optional
        Interior points used to seed the partition of each integral.
    plan : tuple, optional
        A partition returned by a previous call. When given the rule is
        applied on that partition only, with no refinement, so the result
        is a smooth function of any parameters the integrand depends on.
    """
    if plan is not None:
        owner, lo, hi = plan
        val, err = _gk15(f, owner, lo, hi)
        n = int(np.max(owner)) + 1 if owner.size else 0
        values = np.bincount(owner, weights=val, minlength=n)
        errors = np.bincount(owner, weights=err, minlength=n)
        return BatchQuadResult(values, errors, np.ones(n, bool), plan)

    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    n = a.size
    if breaks is None:
        owner = np.arange(n)
        lo, hi = a.copy(), b.copy()
    else:
        pts = np.column_stack([a, np.asarray(breaks, float).reshape(n, -1), b])
        pts = np.sort(pts, axis=1)
        owner = np.repeat(np.arange(n), pts.shape[1] - 1)
        lo = pts[:, :-1].ravel()
        hi = pts[:, 1:].ravel()
        keep = hi > lo
        owner, lo, hi = owner[keep], lo[keep], hi[keep]

    # Global error control in the spirit of QUADPACK's QAG: while an
    # integral's summed error exceeds its tolerance, bisect its intervals
    # whose error is within a factor of the worst one.
    val, err = _gk15(f, owner, lo, hi)
    converged = np.zeros(n, bool)
    while True:
        tot = np.bincount(owner, weights=val, minlength=n)
        tot_err = np.bincount(owner, weights=err, minlength=n)
        tol = np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(tot))
        converged = tot_err <= tol
        n_int = np.bincount(owner, minlength=n)
        width_ok = (hi - lo) > 1e-13 * np.maximum(1.0, np.abs(lo))
        worst = np.zeros(n)
        np.maximum.at(worst, owner, np.where(width_ok, err, 0.0))
        split = (~converged[owner] & (n_int[owner] < cfg.max_subdivisions) & width_ok
                 & (err >= _SPLIT_FRACTION * worst[owner]) & (err > 0))
        if not split.any():
            break
        o, l, h = owner[split], lo[split], hi[split]
        mid = 0.5 * (l + h)
        no = np.concatenate([o, o])
        nl = np.concatenate([l, mid])
        nh = np.concatenate([mid, h])
        nv, ne = _gk15(f, no, nl, nh)
        keep = ~split
        owner = np.concatenate([owner[keep], no])
        lo = np.concatenate([lo[keep], nl])
        hi = np.concatenate([hi[keep], nh])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])

    order = np.lexsort((lo, owner))
    plan = (owner[order], lo[order], hi[order])
    values = np.bincount(owner, weights=val, minlength=n)
    errors = np.bincount(owner, weights=err, minlength=n)
    return BatchQuadResult(values, errors, converged, plan)


def integrate_1d(f, a: float, b: float, cfg: QuadratureConfig = QuadratureConfig(),
                 vectorized: bool = False) -> QuadResult:
    """Integrate a scalar function over the finite interval ``[a, b]``."""
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"need finite a < b, got a={a}, b={b}")
    if vectorized:
        g = lambda owner, x: f(x)
    else:
        fv = np.vectorize(f, otypes=[float])
        g = lambda owner, x: fv(x)
    res = integrate_batch(g, [a], [b], cfg)
    return QuadResult(float(res.values[0]), float(res.errors[0]), bool(res.converged[0]),
                      int(res.plan[0].size))


def invert_monotone(f, target: float, bracket: tuple[float, float]) -> float:
    """Solve ``f(x) = target`` for nondecreasing ``f`` on ``bracket``."""
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if not (flo <= target <= fhi):
        raise BracketError(f"target {target!r} outside [{flo!r}, {fhi!r}] on bracket {bracket}")
    if flo == target:
        return float(lo)
    if fhi == target:
        return float(hi)
    x = optimize.brentq(lambda t: f(t) - target, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return float(x)


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_evals: int
    n_iters: int
    message: str = ""


def minimize(f, init, cfg: OptimizerConfig = OptimizerConfig()) -> MinimizeResult:
    """Nelder-Mead minimisation with optional random restarts.

    Non-finite objective values are treated as +inf so the simplex walks
    away from them; the returned value never exceeds ``f(init)``.
    """
    x0 = np.atleast_1d(np.asarray(init, float))
    f0 = f(x0)
    if not np.isfinite(f0):
        raise OptimizerFailure(f"objective not finite at init ({f0!r})", trace=[(x0, f0)])

    trace = []
    n_bad = 0
    n_calls = 0

    def wrapped(x):
        nonlocal n_bad, n_calls
        n_calls += 1
        v = f(x)
        if not np.isfinite(v):
            n_bad += 1
            if len(trace) < 50:
                trace.append((np.array(x), v))
            return np.inf
        return float(v)

    rng = np.random.default_rng(cfg.seed)
    best_x, best_f = x0, float(f0)
    converged = False
    n_iters = 0
    message = ""
    starts = [x0]
    for k in range(cfg.restarts + 1):
        start = starts[-1]
        # a simplex of +inf values makes scipy's convergence check compute inf - inf
        with np.errstate(invalid="ignore"):
            res = optimize.minimize(
                wrapped, start, method="Nelder-Mead",
                options=dict(maxiter=cfg.max_iters, maxfev=4 * cfg.max_iters,
                             xatol=cfg.x_tol, fatol=cfg.f_tol, adaptive=x0.size > 3,
                             initial_simplex=_initial_simplex(start)))
        n_iters += res.nit
        if res.fun <= best_f:
            if k == 0 or res.fun < best_f:
                converged = bool(res.success)
            best_x, best_f = np.asarray(res.x, float), float(res.fun)
            message = res.message
        if k == 0 and not np.isfinite(res.fun):
            break
        starts.append(best_x + cfg.restart_scale * rng.standard_normal(x0.size))

    if n_calls and n_bad == n_calls:
        raise OptimizerFailure("objective non-finite at every trial point", trace=trace)
    if best_f > f0:
        best_x, best_f = x0, float(f0)
    return MinimizeResult(best_x, best_f, converged, n_calls + 1, n_iters, str(message))


def _initial_simplex(x0, step=0.25):
    p = x0.size
    sim = np.tile(x0, (p + 1, 1))
    for i in range(p):
        sim[i + 1, i] += step if x0[i] == 0 else step * max(1.0, abs(x0[i])) * 0.5
    return sim


def hessian_fd(f, x, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian, symmetrised."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, float)
    p = x.size
    cache = {}

    def ev(offsets):
        key = tuple(offsets)
        if key not in cache:
            pt = x + step * np.asarray(offsets, float)
            v = f(pt)
            if not np.isfinite(v):
                raise StencilError(f"objective non-finite ({v!r}) at stencil point {pt}", pt)
            cache[key] = float(v)
        return cache[key]

    zero = [0] * p
    f0 = ev(zero)
    H = np.empty((p, p))
    for i in range(p):
        e = list(zero); e[i] = 1
        m = list(zero); m[i] = -1
        H[i, i] = (ev(e) - 2.0 * f0 + ev(m)) / step**2
        for j in range(i):
            pp = list(zero); pp[i] = 1; pp[j] = 1
            pm = list(zero); pm[i] = 1; pm[j] = -1
            mp = list(zero); mp[i] = -1; mp[j] = 1
            mm = list(zero); mm[i] = -1; mm[j] = -1
            H[i, j] = H[j, i] = (ev(pp) - ev(pm) - ev(mp) + ev(mm)) / (4.0 * step**2)
    return 0.5 * (H + H.T)


def logit(p):
    return np.log(p) - np.log1p(-p)


def expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, float)))


def fsum(values) -> float:
    """Order-fixed compensated sum."""
    return math.fsum(np.asarray(values, float).ravel().tolist())
