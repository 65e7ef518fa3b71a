"""Stationary bootstrap with season curtailment, and the runs extremal index."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import CensorSpec, ModelParams, SiteSet, UniformMatrix

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.2


@dataclass(frozen=True)
class BootstrapPlan:
    """Stationary-bootstrap settings.

    ``mean_block_length`` is in replicate units (one row of the data).
    ``seasons`` holds one non-decreasing label per row; a block never runs
    past the last row of the season it starts in.
    """

    mean_block_length: float = 14.0
    n_resamples: int = 200
    seasons: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.mean_block_length > 1:
            raise ValueError("mean_block_length must exceed 1")
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be at least 1")
        if self.seasons is not None:
            s = np.asarray(self.seasons)
            if s.ndim != 1 or np.any(np.diff(s) < 0):
                raise ValueError("season labels must be one per row and non-decreasing")
            object.__setattr__(self, "seasons", tuple(int(v) for v in s))


def season_ends(n: int, seasons=None) -> np.ndarray:
    """For each row, the index one past the last row of its season."""
    if seasons is None:
        return np.full(n, n)
    s = np.asarray(seasons)
    if s.size != n:
        raise ValueError(f"{s.size} season labels for {n} rows")
    change = np.flatnonzero(np.diff(s)) + 1
    bounds = np.append(change, n)
    return bounds[np.searchsorted(bounds, np.arange(n), side="right")]


def sample_blocks(n: int, plan: BootstrapPlan, rng, n_blocks: int):
    """Draw block starts and (curtailed) lengths."""
    starts = rng.integers(0, n, size=n_blocks)
    lengths = rng.geometric(1.0 / plan.mean_block_length, size=n_blocks)
    if plan.seasons is None:
        # without seasons the series is still not wrapped; blocks stop at the end
        lengths = np.minimum(lengths, n - starts)
    else:
        ends = season_ends(n, plan.seasons)
        lengths = np.minimum(lengths, ends[starts] - starts)
    return starts, lengths


def stationary_bootstrap_indices(n: int, plan: BootstrapPlan, rng=None) -> np.ndarray:
    """One resample of exactly ``n`` row indices."""
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        # draw in batches; the expected number of blocks is about n / mean length
        k = max(16, int(1.5 * (n - filled) / plan.mean_block_length) + 1)
        starts, lengths = sample_blocks(n, plan, rng, k)
        for s, L in zip(starts, lengths):
            take = min(int(L), n - filled)
            out[filled:filled + take] = np.arange(s, s + take)
            filled += take
            if filled == n:
                break
    return out


def resample_indices(n: int, plan: BootstrapPlan) -> list[np.ndarray]:
    """All resamples, each with its own seed derived from ``plan.seed``."""
    children = np.random.SeedSequence(plan.seed).spawn(plan.n_resamples)
    return [stationary_bootstrap_indices(n, plan, np.random.default_rng(c)) for c in children]


# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    names: list
    estimates: np.ndarray          # (n_ok, p)
    sd: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_failed: int
    n_resamples: int
    level: float = 0.95
    failures: list = field(default_factory=list)

    @property
    def unreliable(self) -> bool:
        return self.n_failed > FAILURE_LIMIT * self.n_resamples

    def summary(self) -> dict:
        return {
            "n_resamples": self.n_resamples, "n_failed": self.n_failed,
            "unreliable": self.unreliable, "level": self.level,
            "parameters": {n: {"sd": float(self.sd[i]), "lo": float(self.lo[i]),
                               "hi": float(self.hi[i])} for i, n in enumerate(self.names)},
        }

    def to_csv(self, path, header_lines=()):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["resample", *self.names])
            for i, row in enumerate(self.estimates):
                w.writerow([i, *(repr(float(v)) for v in row)])


def _refit(job):
    from .likelihood import fit_mle
    k, values, spec, family, sites, init, cfg, options = job
    try:
        fit = fit_mle(UniformMatrix(values), spec, family, sites, init=init, cfg=cfg,
                      options=options, compute_hessian=False)
    except Exception as exc:  # noqa: BLE001 - a failed refit is recorded, not fatal
        return k, None, f"{type(exc).__name__}: {exc}"
    if not fit.converged:
        return k, None, "optimizer did not converge"
    return k, fit.psi_hat, None


def bootstrap_ci(U: UniformMatrix, spec: CensorSpec, family: str, plan: BootstrapPlan,
                 fit_config=None, sites: SiteSet | None = None, init: ModelParams | None = None,
                 options=None, level: float = 0.95, n_jobs: int = 1,
                 progress=None) -> BootstrapResult:
    """Refit the model on stationary-bootstrap resamples.

    ``init`` should be the point estimate; every refit warm-starts there.
    Refits that raise or fail to converge are counted and excluded.
    """
    from .likelihood import FitOptions, default_init, parameter_names
    from .numerics import OptimizerConfig

    values = np.asarray(U.values)
    n = values.shape[0]
    options = options or FitOptions()
    if fit_config is None:
        fit_config = OptimizerConfig(restarts=0, max_iters=200, x_tol=1e-3, f_tol=1e-4)
    init = init or default_init(family, sites)
    names = [nm for nm in parameter_names(family) if nm not in dict(options.fixed)]
    if family == "gaussian" and values.shape[1] == 2 and "nu" in names:
        names.remove("nu")

    jobs = [(k, values[idx], spec, family, sites, init, fit_config, options)
            for k, idx in enumerate(resample_indices(n, plan))]
    results = []
    if n_jobs == 1:
        for job in jobs:
            results.append(_refit(job))
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            for r in ex.map(_refit, jobs):
                results.append(r)
                if progress:
                    progress(len(results), len(jobs))
    results.sort(key=lambda r: r[0])

    ok = [r[1] for r in results if r[1] is not None]
    failures = [(r[0], r[2]) for r in results if r[1] is None]
    for k, msg in failures:
        log.warning("bootstrap resample %d failed: %s", k, msg)
    p = len(names)
    est = np.array([[_param_value(psi, nm) for nm in names] for psi in ok]).reshape(-1, p)
    if len(est):
        a = (1.0 - level) / 2.0
        sd = est.std(axis=0, ddof=1) if len(est) > 1 else np.zeros(p)
        lo, hi = np.quantile(est, [a, 1.0 - a], axis=0)
    else:
        sd = lo = hi = np.full(p, math.nan)
    res = BootstrapResult(names, est, sd, lo, hi, len(failures), plan.n_resamples, level, failures)
    if res.unreliable:
        log.warning("%d of %d bootstrap refits failed; intervals are unreliable",
                    res.n_failed, res.n_resamples)
    return res


def _param_value(psi: ModelParams, name: str) -> float:
    return float(psi.as_dict()[name])


# ---------------------------------------------------------------------------

def runs_extremal_index(U, u: float, m: int = 1) -> float:
    """Runs estimator of the extremal index for the spatial maximum.

    A time point exceeds when any site exceeds ``u``; exceedances separated
    by at least ``m`` non-exceedances belong to different clusters. Returns
    clusters / exceedances, or NaN when nothing exceeds.
    """
    if m < 1:
        raise ValueError("run length m must be at least 1")
    v = np.asarray(getattr(U, "values", U), float)
    if v.ndim == 1:
        v = v[:, None]
    t = np.flatnonzero(np.any(v > u, axis=1))
    if t.size == 0:
        return math.nan
    gaps = np.diff(t) - 1
    clusters = 1 + int(np.sum(gaps >= m))
    return clusters / t.size


def with_seed(plan: BootstrapPlan, seed: int) -> BootstrapPlan:
    return replace(plan, seed=seed)
