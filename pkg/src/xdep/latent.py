"""Latent processes W on the unit-exponential scale (W~ = log W ~ Exp(1)).

Two families are provided:

* :class:`GaussianLatent` - Gaussian copula with powered-exponential
  correlation, any dimension.
* :class:`DirichletLatent` - bivariate inverted max-stable law whose
  exponent function is the Dirichlet (Coles-Tawn) model.

Every family exposes one batched primitive, :meth:`log_partial`, returning
``log d^{|J|} F / prod_{j in J} dy_j`` for a subset ``J``; ``J = ()`` is the
CDF and the full index set is the density. The copula module integrates this
along the radial direction.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import special

from .core import SiteSet, distance_matrix
from .gaussian import (LOG_2PI, CorrelationModel, CorrMatrix, GaussianConditional,
                       MVNAccuracy, corr_matrix, lattice_base)

LOG2 = np.log(2.0)
_Y_FLOOR = 1e-300


class CapabilityError(ValueError):
    pass


def _normalise_J(J, d):
    J = tuple(sorted(set(int(j) for j in J)))
    if J and (J[0] < 0 or J[-1] >= d):
        raise ValueError(f"index set {J} out of range for dimension {d}")
    return J


class LatentModel:
    """Interface shared by the latent families."""

    family: str = ""
    max_dimension: float = np.inf
    d: int

    @property
    def params(self) -> tuple:
        raise NotImplementedError

    def log_partial(self, y, J=(), accuracy=None, shifts=None, bound=False):
        """``bound=True`` may return a cheap upper bound instead of the value."""
        raise NotImplementedError

    def simulate(self, n, rng):
        raise NotImplementedError

    def eta_w(self, j=0, k=1):
        raise NotImplementedError

    # Convenience wrappers on single points -----------------------------
    def _prep(self, y):
        y = np.atleast_2d(np.asarray(y, float))
        if y.shape[-1] != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {y.shape[-1]}")
        if np.any(y < 0):
            raise ValueError("exponential-scale arguments must be >= 0")
        return y

    def cdf(self, y, accuracy=None):
        return np.exp(self.log_partial(self._prep(y), (), accuracy))

    def pdf(self, y, accuracy=None):
        return np.exp(self.log_partial(self._prep(y), tuple(range(self.d)), accuracy))

    def partial_cdf(self, y, J, accuracy=None):
        J = _normalise_J(J, self.d)
        if not J or len(J) == self.d:
            raise ValueError("J must be a non-empty proper subset; use cdf or pdf")
        return np.exp(self.log_partial(self._prep(y), J, accuracy))


# ---------------------------------------------------------------------------
# Gaussian copula latent

def exp_to_normal(y):
    """t = Phi^{-1}(1 - e^{-y}), accurate in both tails."""
    y = np.asarray(y, float)
    out = np.empty(y.shape)
    big = y > LOG2
    out[big] = -special.ndtri_exp(-y[big])
    out[~big] = special.ndtri(-np.expm1(-y[~big]))
    return out


class GaussianLatent(LatentModel):
    """Gaussian copula latent; parameters (lam, nu) on a given set of sites."""

    family = "gaussian"

    def __init__(self, corr: CorrMatrix, model: CorrelationModel | None = None,
                 sites: SiteSet | None = None):
        self.corr = corr
        self.model = model
        self.sites = sites
        self.d = corr.d
        self._cond = {}

    @classmethod
    def from_sites(cls, sites: SiteSet, lam: float, nu: float) -> "GaussianLatent":
        model = CorrelationModel(lam, nu)
        return cls(corr_matrix(distance_matrix(sites), model), model, sites)

    @classmethod
    def from_correlation(cls, sigma) -> "GaussianLatent":
        return cls(CorrMatrix.from_sigma(sigma))

    @property
    def params(self):
        return (self.model.lam, self.model.nu) if self.model else ()

    def conditional(self, J) -> GaussianConditional:
        if J not in self._cond:
            self._cond[J] = GaussianConditional(self.corr.sigma, J)
        return self._cond[J]

    def log_partial(self, y, J=(), accuracy=None, shifts=None, bound=False):
        """Batched log of the J-partial of F_W~ at rows of ``y`` (shape (B, d)).

        ``shifts`` are lattice shifts for the conditional orthant probability,
        either shared (M, m) or per row (B, M, m). With ``bound=True`` the
        conditional probability (at most 1) is skipped, giving an upper bound.
        """
        accuracy = accuracy or MVNAccuracy(method="auto")
        y = np.asarray(y, float)
        J = _normalise_J(J, self.d)
        y = np.maximum(y, 0.0)
        if J:
            # the J-partial at y_j = 0 is a finite limit; approach it from inside
            y = y.copy()
            y[..., list(J)] = np.maximum(y[..., list(J)], _Y_FLOOR)
        t = exp_to_normal(y)
        out = np.zeros(y.shape[:-1])
        if J:
            yJ = y[..., list(J)]
            tJ = t[..., list(J)]
            with np.errstate(invalid="ignore"):
                out = out + np.sum(-yJ + 0.5 * tJ**2 + 0.5 * LOG_2PI, axis=-1)
        cond = self.conditional(J)
        if J:
            with np.errstate(invalid="ignore"):
                out = out + cond.log_density_part(np.where(np.isfinite(t), t, 0.0))
            out = np.where(np.any(~np.isfinite(t[..., list(J)]), axis=-1), -np.inf, out)
        if cond.Jc and not bound:
            base = None
            if len(cond.Jc) > 2 or accuracy.method == "qmc":
                base = _lattice(accuracy.n_points, len(cond.Jc) - 1)
            with np.errstate(invalid="ignore"):
                out = out + cond.log_cdf_part(t, accuracy, shifts=shifts, base=base)
        return np.where(np.isnan(out), -np.inf, out)

    def simulate(self, n, rng):
        z = rng.standard_normal((n, self.d)) @ self.corr.chol.T
        # W~ = -log{1 - Phi(Z)} = -log Phi(-Z)
        return -special.log_ndtr(-z)

    def eta_w(self, j=0, k=1):
        return 0.5 * (1.0 + self.corr.sigma[j, k])

    def eta_w_at(self, h):
        if self.model is None:
            raise ValueError("distance-based eta needs a correlation model")
        return 0.5 * (1.0 + self.model.rho(h))


@lru_cache(maxsize=64)
def _lattice(n_points, dim):
    return lattice_base(n_points, dim)


# ---------------------------------------------------------------------------
# Inverted Dirichlet (bivariate) latent

def dirichlet_V(x1, x2, alpha, beta):
    """Dirichlet exponent function V(x1, x2) (unit-Frechet margins)."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = alpha * x1 / (alpha * x1 + beta * x2)
    q = np.where(np.isinf(x2) & np.isfinite(x1), 0.0, q)
    q = np.where(np.isinf(x1) & np.isfinite(x2), 1.0, q)
    t1 = np.where(np.isinf(x1), 0.0, (1.0 - special.betainc(alpha + 1, beta, q)) / x1)
    t2 = np.where(np.isinf(x2), 0.0, special.betainc(alpha, beta + 1, q) / x2)
    out = t1 + t2
    return out if out.ndim else float(out)


class DirichletLatent(LatentModel):
    """Inverted max-stable latent with Dirichlet exponent; dimension 2 only.

    With ``A(y1, y2) = V(1/y1, 1/y2)`` the survivor function on the
    exponential scale is ``exp(-A)``, and by homogeneity
    ``A_1 = 1 - Be(q; alpha+1, beta)``, ``A_2 = Be(q; alpha, beta+1)``,
    ``q = alpha y2 / (alpha y2 + beta y1)``.
    """

    family = "dirichlet"
    max_dimension = 2

    def __init__(self, alpha: float, beta: float, d: int = 2):
        if d != 2:
            raise CapabilityError("the Dirichlet latent is implemented for two sites only")
        if not (alpha > 0 and beta > 0):
            raise ValueError("Dirichlet shapes must be positive")
        self.alpha, self.beta, self.d = float(alpha), float(beta), 2

    @property
    def params(self):
        return (self.alpha, self.beta)

    def _pieces(self, y):
        a, b = self.alpha, self.beta
        y1, y2 = y[..., 0], y[..., 1]
        D = a * y2 + b * y1
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(D > 0, a * y2 / D, 0.5)
        # an infinite coordinate marginalises out; A is then infinite
        q = np.where(np.isinf(y2) & np.isfinite(y1), 1.0, q)
        q = np.where(np.isinf(y1) & np.isfinite(y2), 0.0, q)
        B1 = special.betainc(a + 1, b, q)
        B2 = special.betainc(a, b + 1, q)
        with np.errstate(invalid="ignore"):
            A = np.where(np.isinf(y1) | np.isinf(y2), np.inf, y1 * (1.0 - B1) + y2 * B2)
        return y1, y2, D, q, A, 1.0 - B1, B2

    def log_partial(self, y, J=(), accuracy=None, shifts=None, bound=False):
        y = np.maximum(np.asarray(y, float), 0.0)
        J = _normalise_J(J, 2)
        y1, y2, D, q, A, A1, A2 = self._pieces(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            if J == ():
                # F = 1 - e^{-y1} - e^{-y2} + e^{-A}, arranged to avoid cancellation
                tail = np.where(np.isinf(y2), 0.0, np.exp(-y2) * np.expm1(-(A - y2)))
                F = -np.expm1(-y1) + tail
                return np.log(np.maximum(F, 0.0))
            if J == (0,):
                return np.log(np.maximum(np.exp(-y1) - A1 * np.exp(-A), 0.0))
            if J == (1,):
                return np.log(np.maximum(np.exp(-y2) - A2 * np.exp(-A), 0.0))
            a, b = self.alpha, self.beta
            logb1 = (a * np.log(q) + (b - 1) * np.log1p(-q) - special.betaln(a + 1, b))
            A12 = -np.exp(logb1) * a * b * y1 / D**2
            val = A1 * A2 - A12
            return np.where(val > 0, -A + np.log(val), -np.inf)

    def theta(self):
        return dirichlet_V(1.0, 1.0, self.alpha, self.beta)

    def eta_w(self, j=0, k=1):
        return 1.0 / self.theta()

    def simulate(self, n, rng):
        """Exact simulation by the extremal-functions algorithm, then W~ = 1/M."""
        a, b = self.alpha, self.beta
        M = np.zeros((n, 2))
        for j in range(2):
            E = rng.exponential(size=n)
            zeta = 1.0 / E
            active = zeta > M[:, j]
            while active.any():
                idx = np.flatnonzero(active)
                m = idx.size
                g1 = rng.gamma(a + (j == 0), size=m) / a
                g2 = rng.gamma(b + (j == 1), size=m) / b
                Y = np.column_stack([g1, g2])
                Y = Y / Y[:, [j]]
                cand = zeta[idx, None] * Y
                ok = np.ones(m, bool) if j == 0 else np.all(cand[:, :j] < M[idx, :j], axis=1)
                M[idx[ok]] = np.maximum(M[idx[ok]], cand[ok])
                E[idx] += rng.exponential(size=m)
                zeta[idx] = 1.0 / E[idx]
                active = zeta > M[:, j]
        return 1.0 / M


# ---------------------------------------------------------------------------
# Functional surface

def latent_joint_cdf_exp(x, model: LatentModel, accuracy=None):
    return model.cdf(x, accuracy)


def latent_joint_pdf_exp(x, model: LatentModel, accuracy=None):
    return model.pdf(x, accuracy)


def latent_partial_cdf_exp(x, J, model: LatentModel, accuracy=None):
    return model.partial_cdf(x, J, accuracy)


def latent_simulate(n: int, model: LatentModel, seed) -> np.ndarray:
    return model.simulate(int(n), np.random.default_rng(seed))


def eta_w(model: LatentModel, pair=(0, 1)):
    return model.eta_w(*pair)


def make_latent(family: str, params, sites: SiteSet | None = None, d: int | None = None):
    if family == "gaussian":
        if sites is None:
            raise ValueError("the Gaussian latent needs sites")
        return GaussianLatent.from_sites(sites, *params)
    if family == "dirichlet":
        dim = d if d is not None else (sites.d if sites is not None else 2)
        return DirichletLatent(*params, d=dim)
    raise ValueError(f"unknown latent family {family!r}")
