"""Simulation studies: parameter recovery, AD/AI test power, bivariate model comparison.

Every replicate draws its sites and data from a generator seeded by
(study seed, study tag, delta, replicate), so a replicate is reproducible on
its own and different studies with the same design share replicates. Rows are
appended to a CSV checkpoint as they finish; rerunning with the same
checkpoint skips rows already present.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .copula import CopulaModel
from .core import CensorScheme, CensorSpec, SiteSet, UniformMatrix
from .latent import DirichletLatent, GaussianLatent
from .likelihood import TestUnavailable, aic, dep_class_test, fit_mle
from .numerics import OptimizerConfig

log = logging.getLogger(__name__)

TAGS = {"gaussian": 1, "bivariate": 2}


@dataclass(frozen=True)
class StudyDesign:
    d: int = 5
    n: int = 1000
    lam: float = 0.5
    nu: float = 1.0
    u_star: float = 0.95
    seed: int = 0
    restarts: int = 0
    x_tol: float = 1e-3
    f_tol: float = 1e-4
    max_iters: int = 400

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(max_iters=self.max_iters, x_tol=self.x_tol, f_tol=self.f_tol,
                               restarts=self.restarts, seed=self.seed)


@dataclass(frozen=True)
class BivariateDesign:
    n: int = 2894
    alpha: float = 2.0
    beta: float = 0.5
    delta: float = 0.3
    u_star: float = 0.95
    scheme: str = "any"
    seed: int = 0
    restarts: int = 0
    x_tol: float = 1e-3
    f_tol: float = 1e-4
    max_iters: int = 400

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(max_iters=self.max_iters, x_tol=self.x_tol, f_tol=self.f_tol,
                               restarts=self.restarts, seed=self.seed)


def replicate_rng(seed: int, tag: int, delta: float, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag, int(round(delta * 1e6)), rep]))


def simulate_gaussian_replicate(design: StudyDesign, delta: float, rep: int):
    """Sites uniform in the unit square and n replicates of the copula."""
    rng = replicate_rng(design.seed, TAGS["gaussian"], delta, rep)
    sites = SiteSet.uniform_square(design.d, rng)
    latent = GaussianLatent.from_sites(sites, design.lam, design.nu)
    return UniformMatrix(CopulaModel(delta, latent).simulate(design.n, rng)), sites


def _fit_gaussian(job):
    design, delta, rep = job
    U, sites = simulate_gaussian_replicate(design, delta, rep)
    row = {"delta_true": delta, "rep": rep}
    try:
        fit = fit_mle(U, CensorSpec.common(design.u_star, design.d), "gaussian", sites,
                      cfg=design.optimizer())
    except Exception as exc:  # noqa: BLE001 - recorded as a failed replicate
        return {**row, "status": f"failed: {type(exc).__name__}: {exc}"}
    sd = math.sqrt(fit.var_delta) if fit.var_delta is not None else math.nan
    lam, nu = fit.psi_hat.latent
    return {**row, "status": "ok" if fit.converged else "not converged",
            "delta_hat": fit.psi_hat.delta, "lam_hat": lam, "nu_hat": nu, "sd_delta": sd,
            "loglik": fit.loglik, "n_evals": fit.n_evals}


def simulate_bivariate_replicate(design: BivariateDesign, rep: int):
    rng = replicate_rng(design.seed, TAGS["bivariate"], design.delta, rep)
    latent = DirichletLatent(design.alpha, design.beta)
    return UniformMatrix(CopulaModel(design.delta, latent).simulate(design.n, rng))


BIVARIATE_SITES = SiteSet(np.array([[0.0, 0.0], [1.0, 0.0]]), ("s1", "s2"))


def _fit_bivariate(job):
    design, rep = job
    U = simulate_bivariate_replicate(design, rep)
    spec = CensorSpec.common(design.u_star, 2, CensorScheme(design.scheme))
    row = {"rep": rep}
    try:
        asym = fit_mle(U, spec, "dirichlet", cfg=design.optimizer(), compute_hessian=False)
        sym = fit_mle(U, spec, "gaussian", BIVARIATE_SITES, cfg=design.optimizer(),
                      compute_hessian=False)
    except Exception as exc:  # noqa: BLE001
        return {**row, "status": f"failed: {type(exc).__name__}: {exc}"}
    ok = asym.converged and sym.converged
    return {**row, "status": "ok" if ok else "not converged",
            "delta_dirichlet": asym.psi_hat.delta, "alpha_hat": asym.psi_hat.latent[0],
            "beta_hat": asym.psi_hat.latent[1], "loglik_dirichlet": asym.loglik,
            "aic_dirichlet": aic(asym), "delta_gaussian": sym.psi_hat.delta,
            "lam_hat": sym.psi_hat.latent[0], "loglik_gaussian": sym.loglik,
            "aic_gaussian": aic(sym)}


# ---------------------------------------------------------------------------
# checkpointed runner

def _read_checkpoint(path: Path, design_json: str) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        if first.strip() != f"# design {design_json}":
            raise ValueError(f"checkpoint {path} was written for a different design")
        for row in csv.DictReader(fh):
            rows.append({k: _parse(v) for k, v in row.items()})
    return rows


def _parse(v):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _run(worker, jobs, keyf, design, checkpoint, n_jobs, progress):
    design_json = json.dumps(asdict(design), sort_keys=True)
    path = Path(checkpoint) if checkpoint else None
    done = _read_checkpoint(path, design_json) if path else []
    have = {keyf(r) for r in done}
    wanted = {keyf(_job_key_row(j)) for j in jobs}
    todo = [j for j in jobs if keyf(_job_key_row(j)) not in have]
    n_done = len(wanted & have)
    fieldnames = None
    fh = writer = None
    if path and todo:
        new = not path.exists()
        fh = path.open("a", newline="", encoding="utf-8")
        if new:
            fh.write(f"# design {design_json}\n")
    rows = list(done)
    try:
        results = map(worker, todo) if n_jobs == 1 else ProcessPoolExecutor(n_jobs).map(worker, todo)
        for row in results:
            rows.append(row)
            if fh is not None:
                if writer is None:
                    fieldnames = _fieldnames(worker)
                    writer = csv.DictWriter(fh, fieldnames=fieldnames, restval="")
                    if fh.tell() == len(f"# design {design_json}\n".encode()):
                        writer.writeheader()
                writer.writerow({k: _fmt(row.get(k, "")) for k in fieldnames})
                fh.flush()
            n_done += 1
            if progress:
                progress(n_done, len(jobs))
    finally:
        if fh is not None:
            fh.close()
    rows = [r for r in rows if keyf(r) in wanted]
    return sorted(rows, key=keyf)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _fieldnames(worker):
    if worker is _fit_gaussian:
        return ["delta_true", "rep", "status", "delta_hat", "lam_hat", "nu_hat", "sd_delta",
                "loglik", "n_evals"]
    return ["rep", "status", "delta_dirichlet", "alpha_hat", "beta_hat", "loglik_dirichlet",
            "aic_dirichlet", "delta_gaussian", "lam_hat", "loglik_gaussian", "aic_gaussian"]


def _job_key_row(job):
    if len(job) == 3:
        return {"delta_true": job[1], "rep": job[2]}
    return {"rep": job[1]}


def _gkey(r):
    return (round(float(r["delta_true"]), 9), int(r["rep"]))


def run_gaussian_replicates(design: StudyDesign, deltas, n_rep: int, checkpoint=None,
                            n_jobs: int = 1, progress=None) -> list[dict]:
    jobs = [(design, float(d), r) for d in deltas for r in range(n_rep)]
    return _run(_fit_gaussian, jobs, _gkey, design, checkpoint, n_jobs, progress)


def run_bivariate_replicates(design: BivariateDesign, n_rep: int, checkpoint=None,
                             n_jobs: int = 1, progress=None) -> list[dict]:
    jobs = [(design, r) for r in range(n_rep)]
    return _run(_fit_bivariate, jobs, lambda r: int(r["rep"]), design, checkpoint, n_jobs,
                progress)


# ---------------------------------------------------------------------------
# summaries

def _ok(rows):
    return [r for r in rows if r.get("status") == "ok"]


def recovery_summary(rows) -> list[dict]:
    out = []
    for d in sorted({float(r["delta_true"]) for r in rows}):
        mine = [r for r in rows if float(r["delta_true"]) == d]
        est = np.array([float(r["delta_hat"]) for r in _ok(mine)])
        q1, med, q3 = np.quantile(est, [0.25, 0.5, 0.75]) if est.size else (math.nan,) * 3
        out.append({"delta_true": d, "n_ok": int(est.size), "n_failed": len(mine) - int(est.size),
                    "median": float(med), "median_abs_error": float(np.median(np.abs(est - d)))
                    if est.size else math.nan, "iqr": float(q3 - q1)})
    return out


def power_summary(rows, alpha: float = 0.05) -> list[dict]:
    """Rejection proportions; fits without a usable SE count as non-rejections."""
    out = []
    for d in sorted({float(r["delta_true"]) for r in rows}):
        mine = [r for r in rows if float(r["delta_true"]) == d]
        n_ad = n_ai = n_unavail = 0
        for r in mine:
            try:
                if r.get("status") != "ok":
                    raise TestUnavailable(r.get("status"))
                t = dep_class_test(float(r["delta_hat"]), alpha, sd=float(r["sd_delta"]))
            except (TestUnavailable, TypeError, ValueError):
                n_unavail += 1
                continue
            n_ad += t.reject_AD
            n_ai += t.reject_AI
        m = len(mine)
        out.append({"delta_true": d, "n": m, "n_unavailable": n_unavail,
                    "reject_AD": n_ad / m if m else math.nan,
                    "reject_AI": n_ai / m if m else math.nan})
    return out


def comparison_summary(rows) -> dict:
    ok = _ok(rows)
    wins = sum(float(r["aic_dirichlet"]) < float(r["aic_gaussian"]) for r in ok)
    return {"n": len(rows), "n_ok": len(ok), "dirichlet_wins": wins,
            "proportion": wins / len(ok) if ok else math.nan}
