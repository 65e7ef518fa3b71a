"""Censored copula likelihood, maximum-likelihood fitting and the AD/AI test.

Each replicate i contributes according to J_i = {j : U_ij > u*_j}:

* J_i empty - the censored probability C(u*),
* J_i full - the copula density c(U_i),
* otherwise - the partial derivative C_{J_i} at max(U_i, u*).

Under the ``any`` scheme every replicate with a non-empty J_i contributes
the full density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .copula import CopulaModel
from .core import CensorScheme, CensorSpec, ModelParams, SiteSet, UniformMatrix, distance_matrix
from .gaussian import MVNAccuracy
from .latent import make_latent
from .margins import quantile_exp
from .numerics import (OptimizerConfig, OptimizerFailure, QuadratureConfig, QuadratureError,
                       StencilError, fsum, hessian_fd, minimize)

log = logging.getLogger(__name__)


class LikelihoodError(ArithmeticError):
    def __init__(self, message, row=None, J=None):
        super().__init__(message)
        self.row, self.J = row, J


class TestUnavailable(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# parameter transforms

class Transform:
    """Map between a bounded parameter and an unconstrained working value."""

    def __init__(self, kind: str, lo: float = 0.0, hi: float = 1.0):
        if kind not in ("logit", "probit", "log", "identity"):
            raise ValueError(f"unknown transform {kind!r}")
        self.kind, self.lo, self.hi = kind, lo, hi

    def to_working(self, v):
        if self.kind == "log":
            return math.log(v)
        if self.kind == "identity":
            return float(v)
        p = (v - self.lo) / (self.hi - self.lo)
        p = min(max(p, 1e-12), 1 - 1e-12)
        return float(special.logit(p)) if self.kind == "logit" else float(special.ndtri(p))

    def from_working(self, w):
        if self.kind == "log":
            return math.exp(w)
        if self.kind == "identity":
            return float(w)
        p = special.expit(w) if self.kind == "logit" else special.ndtr(w)
        return float(self.lo + (self.hi - self.lo) * p)

    def jacobian(self, w):
        """d(value)/d(working) at ``w``."""
        if self.kind == "log":
            return math.exp(w)
        if self.kind == "identity":
            return 1.0
        if self.kind == "logit":
            p = special.expit(w)
            return float((self.hi - self.lo) * p * (1 - p))
        return float((self.hi - self.lo) * stats.norm.pdf(w))


@dataclass(frozen=True)
class FitOptions:
    """Model-fitting knobs."""

    delta_transform: str = "logit"       # or "probit"
    delta_box: tuple = (0.0, 1.0)        # e.g. (0.0, 0.8) for the practical restriction
    fixed: tuple = ()                    # ((name, value), ...) held constant
    quad: QuadratureConfig = QuadratureConfig(rel_tol=1e-5, abs_tol=1e-300)
    accuracy: MVNAccuracy = MVNAccuracy(n_points=61, n_randomizations=4, method="auto")
    qmc_seed: int = 0
    hessian_step: float = 1e-4


def parameter_names(family: str) -> tuple:
    return ("delta", "lam", "nu") if family == "gaussian" else ("delta", "alpha", "beta")


def _transforms(family, opts: FitOptions):
    lo, hi = opts.delta_box
    tr = {"delta": Transform(opts.delta_transform, lo, hi)}
    if family == "gaussian":
        tr["lam"] = Transform("log")
        tr["nu"] = Transform("logit", 0.0, 2.0)
    else:
        tr["alpha"] = Transform("log")
        tr["beta"] = Transform("log")
    return tr


# ---------------------------------------------------------------------------
# likelihood object

@dataclass
class PatternGroup:
    J: tuple
    rows: np.ndarray      # replicate indices
    points: np.ndarray    # evaluation points max(U_i, u*)


class CensoredLikelihood:
    """Censored log-likelihood of uniform-scale data for one latent family.

    Replicates are grouped by their exceedance pattern so that each pattern
    is integrated in one batched call. QMC shifts are tied to (pattern,
    replicate) so the log-likelihood is a deterministic function of psi.
    """

    def __init__(self, U, spec: CensorSpec, family: str = "gaussian",
                 sites: SiteSet | None = None, options: FitOptions = FitOptions()):
        self.U = U.values if isinstance(U, UniformMatrix) else np.asarray(U, float)
        if self.U.ndim != 2:
            raise ValueError("U must be an n x d matrix")
        self.n, self.d = self.U.shape
        if spec.thresholds.size == 1:
            spec = CensorSpec(np.full(self.d, spec.thresholds[0]), spec.scheme)
        if spec.thresholds.size != self.d:
            raise ValueError("one threshold per site is required")
        if family == "gaussian" and (sites is None or sites.d != self.d):
            raise ValueError("the Gaussian latent needs one site per column")
        self.spec, self.family, self.sites, self.options = spec, family, sites, options
        self.groups = self._group()
        self.n_censored = int(np.sum(~(self.U > spec.thresholds).any(axis=1)))

    def _group(self):
        exceed = self.U > self.spec.thresholds
        uncensored = self.spec.scheme is CensorScheme.ANY_OVER_THRESHOLD
        if uncensored:
            exceed = np.where(exceed.any(axis=1, keepdims=True), True, exceed)
        groups = {}
        for i, row in enumerate(exceed):
            groups.setdefault(tuple(np.flatnonzero(row)), []).append(i)
        out = []
        for J in sorted(groups, key=lambda j: (len(j), j)):
            rows = np.array(groups[J])
            if uncensored and J:
                # any exceedance makes the whole vector an uncensored observation
                pts = self.U[rows]
            else:
                pts = np.maximum(self.U[rows], self.spec.thresholds)
            if not J:
                pts = pts[:1]
            out.append(PatternGroup(J, rows, pts))
        return out

    def counts(self) -> dict:
        c = {"none": 0, "some": 0, "all": 0}
        for g in self.groups:
            key = "none" if not g.J else ("all" if len(g.J) == self.d else "some")
            c[key] += g.rows.size
        return c

    def copula(self, params: ModelParams) -> CopulaModel:
        latent = make_latent(self.family, params.latent, sites=self.sites, d=self.d)
        return CopulaModel(params.delta, latent, quad=self.options.quad,
                           accuracy=self.options.accuracy, seed=self.options.qmc_seed)

    def contributions(self, params: ModelParams, plans=None, return_plans=False):
        """Per-replicate log contributions (length n), optionally with quadrature plans."""
        cop = self.copula(params)
        delta = params.delta
        # one quantile inversion per distinct value
        need = [self.spec.thresholds] + [g.points[:, list(g.J)].ravel() for g in self.groups if g.J]
        vals = np.unique(np.concatenate(need))
        qs = quantile_exp(vals, delta) if 1e-6 < delta < 1 - 1e-6 else None
        out = np.empty(self.n)
        new_plans = {}
        for g in self.groups:
            code = sum(1 << j for j in g.J) + 1
            x = None
            if qs is not None:
                x = qs[np.searchsorted(vals, g.points)]
            plan = None if plans is None else plans.get(g.J)
            try:
                res = cop.log_copula(g.points, g.J, rows=g.rows[: g.points.shape[0]],
                                     call_site=code, plan=plan, x=x)
            except QuadratureError as exc:
                raise LikelihoodError(f"quadrature failed for pattern J={g.J}: {exc}",
                                      row=int(g.rows[0]), J=g.J) from exc
            new_plans[g.J] = res.plan
            lv = res.log_value
            if not g.J:
                lv = np.full(g.rows.size, lv[0])
            bad = ~np.isfinite(lv)
            if bad.any():
                i = int(g.rows[np.flatnonzero(bad)[0]])
                raise LikelihoodError(f"non-positive or non-finite contribution at replicate {i} "
                                      f"(J={g.J}, psi={params.as_dict()})", row=i, J=g.J)
            out[g.rows] = lv
        return (out, new_plans) if return_plans else out

    def loglik(self, params: ModelParams, plans=None) -> float:
        return fsum(self.contributions(params, plans))


def censored_loglik(psi: ModelParams, U, spec: CensorSpec, sites: SiteSet | None = None,
                    options: FitOptions = FitOptions()) -> float:
    return CensoredLikelihood(U, spec, psi.family, sites, options).loglik(psi)


# ---------------------------------------------------------------------------
# fitting

@dataclass
class FitResult:
    psi_hat: ModelParams
    loglik: float
    hessian: np.ndarray | None
    var_delta: float | None
    converged: bool
    n_contributions: dict
    free: tuple
    fixed: dict
    working: np.ndarray
    n_evals: int = 0
    message: str = ""
    delta_transform: str = "logit"

    @property
    def n_params(self) -> int:
        return len(self.free)

    def to_dict(self) -> dict:
        return {
            "psi_hat": self.psi_hat.as_dict(),
            "loglik": self.loglik,
            "aic": aic(self),
            "var_delta": self.var_delta,
            "sd_delta": None if self.var_delta is None else math.sqrt(self.var_delta),
            "converged": self.converged,
            "n_contributions": self.n_contributions,
            "free_parameters": list(self.free),
            "fixed_parameters": self.fixed,
            "n_evals": self.n_evals,
            "message": self.message,
            "hessian_working": None if self.hessian is None else self.hessian.tolist(),
        }


def default_init(family, sites: SiteSet | None):
    if family == "gaussian":
        dist = distance_matrix(sites)
        lam0 = float(np.median(dist[np.triu_indices(sites.d, 1)]))
        return ModelParams(0.5, (lam0, 1.0), "gaussian")
    return ModelParams(0.5, (1.0, 1.0), "dirichlet")


def fit_mle(U, spec: CensorSpec, family: str = "gaussian", sites: SiteSet | None = None,
            init: ModelParams | None = None, cfg: OptimizerConfig = OptimizerConfig(restarts=2),
            options: FitOptions = FitOptions(), compute_hessian: bool = True) -> FitResult:
    """Maximise the censored log-likelihood over unconstrained working coordinates."""
    lik = U if isinstance(U, CensoredLikelihood) else CensoredLikelihood(U, spec, family, sites, options)
    family, options = lik.family, lik.options
    counts = lik.counts()
    if counts["none"] == lik.n:
        log.warning("no replicate exceeds its threshold; dependence parameters are weakly identified")
    names = parameter_names(family)
    fixed = dict(options.fixed)
    if family == "gaussian" and lik.d == 2 and "nu" not in fixed:
        fixed["nu"] = 1.0
        log.info("two sites: smoothness nu fixed at 1")
    init = init or default_init(family, lik.sites)
    start = dict(zip(names, (init.delta, *init.latent)))
    start.update(fixed)
    lo, hi = options.delta_box
    if "delta" not in fixed:
        start["delta"] = min(max(start["delta"], lo + 1e-3 * (hi - lo)), hi - 1e-3 * (hi - lo))
    free = tuple(n for n in names if n not in fixed)
    tr = _transforms(family, options)

    def params_of(w):
        vals = dict(fixed)
        for name, wi in zip(free, w):
            vals[name] = tr[name].from_working(wi)
        return ModelParams(vals["delta"], tuple(vals[n] for n in names[1:]), family)

    def objective(w, plans=None):
        try:
            return -lik.loglik(params_of(w), plans)
        except (LikelihoodError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.debug("objective failed at %s: %s", w, exc)
            return np.inf

    w0 = np.array([tr[n].to_working(start[n]) for n in free])
    if not free:
        ll = lik.loglik(params_of(w0))
        return FitResult(params_of(w0), ll, None, None, True, counts, free, fixed, w0,
                         1, "all parameters fixed", options.delta_transform)
    try:
        res = minimize(objective, w0, cfg)
    except OptimizerFailure as exc:
        return FitResult(params_of(w0), -np.inf, None, None, False, counts, free, fixed, w0,
                         0, str(exc), options.delta_transform)
    psi = params_of(res.x)
    ll = -res.fun
    H, var_delta = None, None
    if compute_hessian:
        H, var_delta = _hessian_and_var(lik, params_of, res.x, free, tr, options.hessian_step)
    return FitResult(psi, ll, H, var_delta, res.converged, counts, free, fixed, res.x,
                     res.n_evals, res.message, options.delta_transform)


def _hessian_and_var(lik, params_of, w, free, tr, step):
    """Working-scale Hessian of -loglik (on a frozen quadrature plan) and var(delta)."""
    try:
        _, plans = lik.contributions(params_of(w), return_plans=True)
        H = hessian_fd(lambda v: -lik.loglik(params_of(v), plans), w, step)
    except (StencilError, LikelihoodError, ValueError) as exc:
        log.warning("Hessian unavailable: %s", exc)
        return None, None
    if "delta" not in free:
        return H, None
    k = free.index("delta")
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return H, None
    jac = tr["delta"].jacobian(w[k])
    v = jac**2 * cov[k, k]
    if not np.isfinite(v) or v < 0 or np.any(np.linalg.eigvalsh(H) <= 0):
        return H, None
    return H, float(v)


# ---------------------------------------------------------------------------
# inference summaries

@dataclass(frozen=True)
class ClassTest:
    reject_AD: bool
    reject_AI: bool
    z_value: float
    ci: tuple
    alpha: float

    def to_dict(self):
        return {"reject_AD": self.reject_AD, "reject_AI": self.reject_AI,
                "z_value": self.z_value, "ci": list(self.ci), "alpha": self.alpha}


def dep_class_test(fit_or_delta, alpha: float = 0.05, sd: float | None = None) -> ClassTest:
    """One-sided Wald tests of delta <= 1/2 (AI) and delta > 1/2 (AD).

    Accepts a :class:`FitResult` or a bare delta estimate plus its ``sd``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if isinstance(fit_or_delta, FitResult):
        if not fit_or_delta.converged or fit_or_delta.var_delta is None:
            raise TestUnavailable("fit did not converge or var(delta) is unavailable")
        d_hat, sd = fit_or_delta.psi_hat.delta, math.sqrt(fit_or_delta.var_delta)
    else:
        if sd is None or not sd > 0:
            raise TestUnavailable("a positive standard error is required")
        d_hat = float(fit_or_delta)
    z1 = stats.norm.ppf(1 - alpha)
    z2 = stats.norm.ppf(1 - alpha / 2)
    reject_ad = d_hat < 0.5 - sd * z1
    reject_ai = d_hat > 0.5 + sd * z1
    return ClassTest(bool(reject_ad), bool(reject_ai), (d_hat - 0.5) / sd,
                     (d_hat - z2 * sd, d_hat + z2 * sd), alpha)


def aic(fit, n_params: int | None = None) -> float:
    p = fit.n_params if n_params is None else n_params
    return 2.0 * p - 2.0 * fit.loglik
