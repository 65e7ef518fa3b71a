"""Marginal law of X = R^delta W^(1-delta) with R, W standard Pareto.

On the log scale ``L = log x`` the survival function is

    S(L) = {delta exp(-L/delta) - (1-delta) exp(-L/(1-delta))} / (2 delta - 1)

which is a divided difference and cancels badly as delta -> 1/2. Writing
``k = L / (delta (1-delta))`` and ``z = k (2 delta - 1)`` gives the
cancellation-free form

    S(L) = exp(-L/(1-delta)) * {1 + delta k exprel(z)}
    f(L) = exp(-L/(1-delta)) * k exprel(z)

with ``exprel(z) = (e^z - 1)/z``; at delta = 1/2 these are the log-Gamma
expressions ``e^{-2L}(1 + 2L)`` and ``4 L e^{-2L}``. For large ``|z|`` the
log of the dominant power term is taken directly to avoid overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

_Z_SWITCH = 30.0
_ENDPOINT = 1e-12


class DomainError(ValueError):
    pass


def _check_delta(delta):
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"delta must lie in [0, 1], got {delta}")
    return delta


def log_surv_exp(L, delta):
    """log P(X~ > L) for L >= 0."""
    delta = _check_delta(delta)
    L = np.asarray(L, float)
    if np.any(L < 0):
        raise DomainError("log-scale argument must be >= 0 (x >= 1)")
    if delta < _ENDPOINT or delta > 1 - _ENDPOINT:
        return -L
    a, b = delta, 1.0 - delta
    k = L / (a * b)
    z = k * (2 * a - 1)
    out = np.empty(np.shape(L))
    mid = np.abs(z) <= _Z_SWITCH
    hi = z > _Z_SWITCH
    lo = z < -_Z_SWITCH
    out[mid] = -L[mid] / b + np.log1p(a * k[mid] * special.exprel(z[mid]))
    if hi.any():
        out[hi] = np.log(a / (2 * a - 1)) - L[hi] / a + np.log1p(-(b / a) * np.exp(-z[hi]))
    if lo.any():
        out[lo] = np.log(b / (1 - 2 * a)) - L[lo] / b + np.log1p(-(a / b) * np.exp(z[lo]))
    return out if out.ndim else float(out)


def log_pdf_exp(L, delta):
    """log density of X~ = log X at L >= 0 (``-inf`` at L = 0 for delta in (0,1))."""
    delta = _check_delta(delta)
    L = np.asarray(L, float)
    if np.any(L < 0):
        raise DomainError("log-scale argument must be >= 0 (x >= 1)")
    if delta < _ENDPOINT or delta > 1 - _ENDPOINT:
        return -L
    a, b = delta, 1.0 - delta
    k = L / (a * b)
    z = k * (2 * a - 1)
    out = np.empty(np.shape(L))
    mid = np.abs(z) <= _Z_SWITCH
    hi = z > _Z_SWITCH
    lo = z < -_Z_SWITCH
    with np.errstate(divide="ignore"):
        out[mid] = -L[mid] / b + np.log(k[mid]) + np.log(special.exprel(z[mid]))
    if hi.any():
        out[hi] = -L[hi] / a + np.log1p(-np.exp(-z[hi])) - np.log(2 * a - 1)
    if lo.any():
        out[lo] = -L[lo] / b + np.log1p(-np.exp(z[lo])) - np.log(1 - 2 * a)
    return out if out.ndim else float(out)


def cdf_exp(L, delta):
    return -np.expm1(log_surv_exp(L, delta))


def pdf_exp(L, delta):
    return np.exp(log_pdf_exp(L, delta))


def _newton_quantile(log_target, delta, tol=1e-14, max_iter=200):
    """Solve log S(L) = log_target (vectorised, safeguarded Newton)."""
    log_target = np.asarray(log_target, float)
    t_log = -log_target                     # log t, t = 1/(1-u)
    lo = np.zeros_like(t_log)
    hi = np.maximum(50.0, 3.0 * delta * t_log)
    hi = np.maximum(hi, 3.0 * t_log)
    for _ in range(60):                     # make sure hi brackets the root
        bad = log_surv_exp(hi, delta) > log_target
        if not bad.any():
            break
        hi = np.where(bad, 2 * hi, hi)
    x = np.clip(max(delta, 1 - delta) * t_log, lo, hi)
    x = np.where(x <= 0, 0.5 * hi, x)
    for _ in range(max_iter):
        g = log_surv_exp(x, delta) - log_target
        lo = np.where(g > 0, x, lo)
        hi = np.where(g <= 0, x, hi)
        # d log S / dL = -f/S
        slope = -np.exp(log_pdf_exp(x, delta) - log_surv_exp(x, delta))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope < 0, g / slope, np.nan)
        nxt = x - step
        bad = ~np.isfinite(nxt) | (nxt <= lo) | (nxt >= hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        done = np.abs(nxt - x) <= tol * np.maximum(1.0, np.abs(x))
        x = nxt
        if done.all() or np.all(hi - lo <= tol * np.maximum(1.0, x)):
            break
    return x


def quantile_exp(u, delta):
    """F_X~^{-1}(u) = log F_X^{-1}(u)."""
    delta = _check_delta(delta)
    u = np.asarray(u, float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    log_target = np.log1p(-u)
    if delta < _ENDPOINT or delta > 1 - _ENDPOINT:
        out = -log_target
    else:
        out = _newton_quantile(np.atleast_1d(log_target), delta).reshape(u.shape)
    return out if np.ndim(out) else float(out)


def quantile_exp_from_log_surv(log_sv, delta):
    """Quantile given ``log(1-u)``; keeps precision when u is within 1e-16 of 1."""
    delta = _check_delta(delta)
    log_sv = np.atleast_1d(np.asarray(log_sv, float))
    if delta < _ENDPOINT or delta > 1 - _ENDPOINT:
        return -log_sv
    return _newton_quantile(log_sv, delta)


# ---------------------------------------------------------------------------
# Original (Pareto-like) scale

def _log_x(x):
    x = np.asarray(x, float)
    if np.any(x < 1):
        raise DomainError("support of X is [1, inf); got x < 1")
    return np.log(x)


def surv_x(x, delta):
    """P(X > x)."""
    return np.exp(log_surv_exp(_log_x(x), delta))


def cdf_x(x, delta):
    return -np.expm1(log_surv_exp(_log_x(x), delta))


def pdf_x(x, delta):
    L = _log_x(x)
    return np.exp(log_pdf_exp(L, delta) - L)


def quantile_x(u, delta):
    return np.exp(quantile_exp(u, delta))


def quantile_x_asymptotic(u, delta):
    """Two-term tail expansion of the quantile for delta > 1/2.

    q(t) ~ c^delta t^delta [1 - (1-delta) c^{(1-2delta)/(1-delta)} t^{(1-2delta)/(1-delta)}]
    with t = 1/(1-u) and c = delta/(2 delta - 1).
    """
    delta = _check_delta(delta)
    if not 0.5 < delta < 1:
        raise DomainError("the tail expansion needs 1/2 < delta < 1")
    t = 1.0 / (1.0 - np.asarray(u, float))
    c = delta / (2 * delta - 1)
    e = (1 - 2 * delta) / (1 - delta)
    return c**delta * t**delta * (1 - (1 - delta) * c**e * t**e)


@dataclass(frozen=True)
class MarginX:
    delta: float

    def __post_init__(self):
        _check_delta(self.delta)

    def surv(self, x):
        return surv_x(x, self.delta)

    def cdf(self, x):
        return cdf_x(x, self.delta)

    def pdf(self, x):
        return pdf_x(x, self.delta)

    def quantile(self, u):
        return quantile_x(u, self.delta)

    def exp_scale(self) -> "ExpMargin":
        return ExpMargin(self.delta)


@dataclass(frozen=True)
class ExpMargin:
    """Margin bundle for X~ = log X (support [0, inf))."""

    delta: float

    def cdf(self, L):
        return cdf_exp(L, self.delta)

    def pdf(self, L):
        return pdf_exp(L, self.delta)

    def logpdf(self, L):
        return log_pdf_exp(L, self.delta)

    def logsf(self, L):
        return log_surv_exp(L, self.delta)

    def ppf(self, u):
        return quantile_exp(u, self.delta)


def exp_scale(delta) -> ExpMargin:
    return ExpMargin(_check_delta(delta))
