"""Multivariate Gaussian machinery for the Gaussian-copula latent process.

Correlation matrices come from the powered-exponential family
``rho(h) = exp{-(h / lam)^nu}``. Orthant probabilities use Genz's
separation-of-variables transform with randomly shifted Richtmyer lattice
points. With ``method="auto"`` the bivariate case uses Owen's T function and
the trivariate case a one-dimensional adaptive integral of the bivariate CDF.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, special

from .numerics import QuadratureConfig, integrate_batch

LOG_2PI = np.log(2.0 * np.pi)
_TINY = 1e-300
_FIRST_PRIMES = np.array([
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151,
    157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
])


class NearSingularError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CorrelationModel:
    lam: float
    nu: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"range lam must be > 0, got {self.lam}")
        if not 0 < self.nu <= 2:
            raise ValueError(f"smoothness nu must lie in (0, 2], got {self.nu}")

    def rho(self, h):
        h = np.asarray(h, float)
        return np.exp(-((h / self.lam) ** self.nu))


@dataclass(frozen=True, eq=False)
class CorrMatrix:
    sigma: np.ndarray
    chol: np.ndarray
    jitter_used: float = 0.0

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def from_sigma(cls, sigma, max_jitter: float = 1e-8) -> "CorrMatrix":
        sigma = np.array(sigma, float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(np.diag(sigma), 1.0, atol=1e-12) or not np.allclose(sigma, sigma.T):
            raise ValueError("correlation matrix must be symmetric with unit diagonal")
        jitter = 0.0
        for jitter in (0.0, 1e-14, 1e-12, 1e-10, max_jitter):
            if jitter > max_jitter:
                break
            try:
                m = sigma + jitter * np.eye(len(sigma))
                chol = linalg.cholesky(m, lower=True)
            except linalg.LinAlgError:
                continue
            if np.all(np.diag(chol) > 0):
                return cls(sigma, chol, jitter)
        raise NearSingularError(
            f"correlation matrix not positive definite even with jitter {max_jitter:g}")

    @cached_property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def submatrix(self, idx) -> "CorrMatrix":
        idx = np.asarray(idx, int)
        return CorrMatrix.from_sigma(self.sigma[np.ix_(idx, idx)])


def corr_matrix(dist, model: CorrelationModel, max_jitter: float = 1e-8) -> CorrMatrix:
    """Powered-exponential correlation matrix from a distance matrix."""
    dist = np.asarray(dist, float)
    sigma = model.rho(dist)
    np.fill_diagonal(sigma, 1.0)
    return CorrMatrix.from_sigma(sigma, max_jitter=max_jitter)


@dataclass(frozen=True)
class MVNAccuracy:
    n_points: int = 499
    n_randomizations: int = 25
    seed: int = 0
    reorder: bool = True
    # "qmc" always uses the lattice rule; "auto" is exact for dimension <= 3
    method: str = "qmc"

    def __post_init__(self):
        if self.n_points < 1 or self.n_randomizations < 2:
            raise ValueError("need n_points >= 1 and n_randomizations >= 2")
        if self.method not in ("qmc", "auto"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class MVNResult:
    prob: float
    se: float


def _as_corr(corr) -> CorrMatrix:
    return corr if isinstance(corr, CorrMatrix) else CorrMatrix.from_sigma(corr)


def lattice_base(n_points: int, dim: int) -> np.ndarray:
    """Richtmyer lattice ``frac(k * sqrt(p_j))``, k = 1..n_points."""
    if dim > _FIRST_PRIMES.size:
        raise ValueError(f"lattice supports up to {_FIRST_PRIMES.size} dimensions")
    z = np.sqrt(_FIRST_PRIMES[:dim].astype(float))
    k = np.arange(1, n_points + 1, dtype=float)[:, None]
    return np.mod(k * z[None, :], 1.0)


def lattice_shifts(rng: np.random.Generator, n_randomizations: int, dim: int) -> np.ndarray:
    return rng.random((n_randomizations, max(dim, 1)))


def genz_orthant(upper, chol, base, shifts, max_block: int = 2_000_000):
    """Genz's separation-of-variables estimate of ``P(Z <= upper)``.

    Parameters
    ----------
    upper : (B, k) array
    chol : (k, k) lower Cholesky factor of the correlation matrix
    base : (N, k-1) lattice points
    shifts : (M, k-1) or (B, M, k-1) random shifts

    Returns
    -------
    (B, M) array of per-randomization means.
    """
    upper = np.asarray(upper, float)
    B, k = upper.shape
    N = base.shape[0]
    M = shifts.shape[-2]
    out = np.empty((B, M))
    step = max(1, max_block // (M * N))
    diag = np.diag(chol)
    for s in range(0, B, step):
        b = upper[s:s + step]
        nb = b.shape[0]
        sh = shifts[s:s + step] if shifts.ndim == 3 else np.broadcast_to(shifts, (nb, M, shifts.shape[-1]))
        e = special.ndtr(b[:, 0] / diag[0])[:, None, None] * np.ones((1, M, N))
        f = e.copy()
        ys = []
        for i in range(1, k):
            w = np.mod(base[None, None, :, i - 1] + sh[:, :, None, i - 1], 1.0)
            w = np.abs(2.0 * w - 1.0)
            ys.append(special.ndtri(np.clip(w * e, _TINY, 1.0 - 1e-16)))
            acc = chol[i, 0] * ys[0]
            for j in range(1, i):
                acc += chol[i, j] * ys[j]
            e = special.ndtr((b[:, i, None, None] - acc) / diag[i])
            f *= e
        out[s:s + step] = f.mean(axis=2)
    return out


def mvn_cdf(upper, corr, accuracy: MVNAccuracy = MVNAccuracy()) -> MVNResult:
    """P(Z <= upper) for Z ~ N(0, corr) with its Monte Carlo standard error."""
    upper = np.atleast_1d(np.asarray(upper, float))
    k = upper.size
    if k == 0:
        return MVNResult(1.0, 0.0)
    if np.any(np.isnan(upper)):
        raise ValueError("upper limits contain NaN")
    corr = _as_corr(corr)
    if corr.d != k:
        raise ValueError(f"dimension mismatch: {k} limits, {corr.d}x{corr.d} correlation")
    if np.any(upper == -np.inf):
        return MVNResult(0.0, 0.0)
    fin = np.isfinite(upper)
    if not fin.all():
        if not fin.any():
            return MVNResult(1.0, 0.0)
        return mvn_cdf(upper[fin], corr.submatrix(np.flatnonzero(fin)), accuracy)
    if k == 1:
        return MVNResult(float(special.ndtr(upper[0])), 0.0)
    if k == 2 and accuracy.method == "auto":
        return MVNResult(float(bvn_cdf(upper[0], upper[1], corr.sigma[0, 1])), 0.0)
    if k == 3 and accuracy.method == "auto":
        return MVNResult(float(tvn_cdf(upper[None, :], corr.sigma)[0]), 0.0)
    if accuracy.reorder:
        order = np.argsort(upper, kind="stable")
        upper = upper[order]
        corr = CorrMatrix.from_sigma(corr.sigma[np.ix_(order, order)])
    rng = np.random.default_rng(accuracy.seed)
    base = lattice_base(accuracy.n_points, k - 1)
    shifts = lattice_shifts(rng, accuracy.n_randomizations, k - 1)
    est = genz_orthant(upper[None, :], corr.chol, base, shifts)[0]
    m = est.size
    return MVNResult(float(est.mean()), float(est.std(ddof=1) / np.sqrt(m)))


def bvn_cdf(h, k, rho):
    """Exact standard bivariate normal CDF via Owen's T function."""
    h, k, rho = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float),
                                    np.asarray(rho, float))
    out = np.empty(h.shape)
    ph, pk = special.ndtr(h), special.ndtr(k)

    lo = (h == -np.inf) | (k == -np.inf)
    hinf = (h == np.inf) & ~lo
    kinf = (k == np.inf) & ~lo & ~hinf
    comon = (rho >= 1 - 1e-15) & ~(lo | hinf | kinf)
    anti = (rho <= -1 + 1e-15) & ~(lo | hinf | kinf)
    gen = ~(lo | hinf | kinf | comon | anti)

    out[lo] = 0.0
    out[hinf] = pk[hinf]
    out[kinf] = ph[kinf]
    out[comon] = np.minimum(ph, pk)[comon]
    out[anti] = np.maximum(0.0, ph + pk - 1.0)[anti]
    if gen.any():
        hh, kk, r = h[gen], k[gen], rho[gen]
        hh = np.where(hh == 0, _TINY, hh)
        kk = np.where(kk == 0, _TINY, kk)
        s = np.sqrt((1.0 - r) * (1.0 + r))
        ah = (kk - r * hh) / (hh * s)
        ak = (hh - r * kk) / (kk * s)
        beta = np.where(hh * kk < 0, 0.5, 0.0)
        val = 0.5 * ph[gen] + 0.5 * pk[gen] - special.owens_t(hh, ah) - special.owens_t(kk, ak) - beta
        out[gen] = np.clip(val, 0.0, 1.0)
    return out if out.ndim else float(out)


_TVN_QUAD = QuadratureConfig(rel_tol=1e-12, abs_tol=1e-300, max_subdivisions=200)
_BIG = 40.0  # Phi(40) is 1 in double precision
_HALF_LOG_2PI = 0.5 * LOG_2PI


def tvn_cdf(upper, sigma) -> np.ndarray:
    """Trivariate normal CDF for rows of ``upper`` (shape (B, 3)).

    Conditions on the coordinate least correlated with the other two and
    integrates the exact bivariate conditional CDF over u = Phi(z1).
    """
    upper = np.atleast_2d(np.asarray(upper, float))
    sigma = np.asarray(sigma, float)
    off = np.abs(sigma - np.diag(np.diag(sigma)))
    i = int(np.argmin(off.max(axis=1)))
    order = [i] + [j for j in range(3) if j != i]
    b = np.clip(upper[:, order], -np.inf, _BIG)
    R = sigma[np.ix_(order, order)]
    r12, r13, r23 = R[0, 1], R[0, 2], R[1, 2]
    s2, s3 = np.sqrt(1.0 - r12**2), np.sqrt(1.0 - r13**2)
    rho = np.clip((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0)

    out = np.zeros(b.shape[0])
    live = np.flatnonzero(np.all(b > -np.inf, axis=1))
    if live.size == 0:
        return out
    bl = b[live]
    # below z = -12 the weight phi(z) leaves less than 2e-33 of mass
    lo = np.minimum(-12.0, bl[:, 0] - 10.0)

    def g(owner, z):
        bb = bl[owner]
        return np.exp(-0.5 * z * z - _HALF_LOG_2PI) * bvn_cdf(
            (bb[:, 1, None] - r12 * z) / s2, (bb[:, 2, None] - r13 * z) / s3, rho)

    res = integrate_batch(g, lo, bl[:, 0], _TVN_QUAD)
    out[live] = np.clip(res.values, 0.0, 1.0)
    return out


def mvn_logpdf(z, corr) -> np.ndarray:
    """Log density of N(0, corr) at ``z`` (last axis is the dimension)."""
    corr = _as_corr(corr)
    z = np.asarray(z, float)
    sol = linalg.solve_triangular(corr.chol, np.moveaxis(z, -1, 0).reshape(corr.d, -1), lower=True)
    quad = np.sum(sol**2, axis=0).reshape(z.shape[:-1])
    return -0.5 * (corr.d * LOG_2PI + corr.logdet + quad)


def mvn_pdf(z, corr):
    out = np.exp(mvn_logpdf(z, corr))
    return out if np.ndim(out) else float(out)


@dataclass(eq=False)
class GaussianConditional:
    """Precomputed pieces of the Gaussian partial derivative
    ``d^|J| Phi_d / prod_{j in J} dz_j = phi_J(z_J) * Phi_{Jc}(z_Jc | z_J)``.
    """

    sigma: np.ndarray
    J: tuple
    var_floor: float = 1e-12
    Jc: tuple = field(init=False)

    def __post_init__(self):
        d = self.sigma.shape[0]
        self.J = tuple(sorted(self.J))
        self.Jc = tuple(j for j in range(d) if j not in self.J)
        J, Jc = list(self.J), list(self.Jc)
        if J:
            self.corr_J = CorrMatrix.from_sigma(self.sigma[np.ix_(J, J)])
        if Jc and J:
            s_cJ = self.sigma[np.ix_(Jc, J)]
            self.A = linalg.cho_solve((self.corr_J.chol, True), s_cJ.T).T
            cov = self.sigma[np.ix_(Jc, Jc)] - self.A @ s_cJ.T
            var = np.maximum(np.diag(cov), self.var_floor)
            self.cond_sd = np.sqrt(var)
            r = cov / np.outer(self.cond_sd, self.cond_sd)
            np.fill_diagonal(r, 1.0)
            self.corr_c = CorrMatrix.from_sigma(0.5 * (r + r.T))
        elif Jc:
            self.A = np.zeros((len(Jc), 0))
            self.cond_sd = np.ones(len(Jc))
            self.corr_c = CorrMatrix.from_sigma(self.sigma[np.ix_(Jc, Jc)])

    def log_density_part(self, t):
        if not self.J:
            return np.zeros(t.shape[:-1])
        return mvn_logpdf(t[..., list(self.J)], self.corr_J)

    def conditional_bounds(self, t):
        tJ = t[..., list(self.J)]
        mu = tJ @ self.A.T
        return (t[..., list(self.Jc)] - mu) / self.cond_sd

    def log_cdf_part(self, t, accuracy: MVNAccuracy, shifts=None, base=None):
        """log Phi_{Jc}(conditional bounds); ``shifts`` may be per row (B, M, m)."""
        if not self.Jc:
            return np.zeros(t.shape[:-1])
        b = self.conditional_bounds(t)
        shape = b.shape[:-1]
        b = b.reshape(-1, len(self.Jc))
        k = b.shape[1]
        if k == 1:
            p = special.ndtr(b[:, 0])
        elif k == 2 and accuracy.method == "auto":
            p = bvn_cdf(b[:, 0], b[:, 1], self.corr_c.sigma[0, 1])
        elif k == 3 and accuracy.method == "auto":
            p = tvn_cdf(b, self.corr_c.sigma)
        else:
            if base is None:
                base = lattice_base(accuracy.n_points, k - 1)
            if shifts is None:
                shifts = lattice_shifts(np.random.default_rng(accuracy.seed),
                                        accuracy.n_randomizations, k - 1)
            p = genz_orthant(b, self.corr_c.chol, base, shifts).mean(axis=1)
        with np.errstate(divide="ignore"):
            return np.log(p).reshape(shape)


def mvn_partial_cdf(upper, corr, J, accuracy: MVNAccuracy = MVNAccuracy()) -> float:
    """Mixed partial derivative of the Gaussian CDF in the coordinates ``J``."""
    J = tuple(sorted(set(int(j) for j in J)))
    if not J:
        raise ValueError("J must be non-empty; use mvn_cdf for the plain CDF")
    corr = _as_corr(corr)
    upper = np.asarray(upper, float)
    if max(J) >= corr.d or min(J) < 0:
        raise ValueError(f"J={J} out of range for dimension {corr.d}")
    cond = GaussianConditional(corr.sigma, J)
    logd = cond.log_density_part(upper[None, :])[0]
    if not cond.Jc:
        return float(np.exp(logd))
    b = cond.conditional_bounds(upper[None, :])[0]
    p = mvn_cdf(b, cond.corr_c, accuracy).prob
    return float(np.exp(logd) * p)
