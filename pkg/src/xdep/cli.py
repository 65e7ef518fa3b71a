"""Batch command-line interface.

Each subcommand reads its settings from built-in defaults, then an optional
JSON or YAML config file (``--config``), then command-line flags; flags win.
The resolved settings and the library version are written into every output.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 partial results written.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .copula import CopulaModel
from .core import (CensorScheme, CensorSpec, DataError, ModelParams, SiteSet, UniformMatrix,
                   load_dataset, read_sites, write_matrix_csv, write_sites)
from .dependence import (empirical_chi_curve, exceedance_count_distribution,
                         model_chi_u_curve)
from .gaussian import NearSingularError
from .latent import CapabilityError, make_latent
from .likelihood import (FitOptions, LikelihoodError, TestUnavailable, aic, dep_class_test,
                         fit_mle)
from .margins_data import empirical_transform, semiparametric_transform
from .numerics import OptimizerConfig, OptimizerFailure, QuadratureError
from .resample import BootstrapPlan, bootstrap_ci
from . import studies

log = logging.getLogger("xdep")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# defaults per command

COMMON = {"seed": 0, "out": "."}
MODEL = {"family": "gaussian", "delta": 0.5, "lam": 0.5, "nu": 1.0, "alpha": 1.0, "beta": 1.0}
FITTING = {"u_star": 0.95, "scheme": "some", "delta_box": [0.0, 1.0], "delta_transform": "logit",
           "gaussian_only": False, "restarts": 2, "max_iters": 400, "x_tol": 1e-4, "f_tol": 1e-6,
           "test_alpha": 0.05}
DATA = {"data": None, "sites": None, "season_column": None, "transform": "none",
        "threshold_prob": 0.95}
STUDY = {"d": 5, "n": 1000, "lam": 0.5, "nu": 1.0, "u_star": 0.95, "n_rep": 20,
         "restarts": 0, "x_tol": 1e-3, "f_tol": 1e-4, "max_iters": 400, "checkpoint": None,
         "n_jobs": 1}

DEFAULTS = {
    "simulate": {**COMMON, **MODEL, "d": 5, "n": 1000, "sites": None},
    "transform": {**COMMON, **DATA, "method": "semiparametric"},
    "fit": {**COMMON, **DATA, **FITTING, "family": "gaussian", "init": None},
    "chi": {**COMMON, **DATA, "u_grid": [0.9, 0.995, 20], "mode": "pairwise", "pair": [0, 1],
            "cond": 0, "fit_report": None, "n_mc": 100_000, "u_count": 0.95, "band_level": 0.95,
            "bootstrap": 0, "mean_block_length": 14.0},
    "test": {**COMMON, "fit_report": None, "delta_hat": None, "sd": None, "test_alpha": 0.05},
    "bootstrap": {**COMMON, **DATA, **FITTING, "family": "gaussian", "fit_report": None,
                  "n_resamples": 200, "mean_block_length": 14.0, "level": 0.95,
                  "restarts": 0, "max_iters": 200, "x_tol": 1e-3, "f_tol": 1e-4, "n_jobs": 1},
    "power-study": {**COMMON, **STUDY, "deltas": [0.3, 0.45, 0.55, 0.7], "n_rep": 50,
                    "test_alpha": 0.05},
    "recovery-study": {**COMMON, **STUDY, "deltas": [0.3, 0.5, 0.7]},
    "compare-bivariate": {**COMMON, "n": 2894, "alpha": 2.0, "beta": 0.5, "delta": 0.3,
                          "u_star": 0.95, "scheme": "any", "n_rep": 20, "restarts": 0,
                          "x_tol": 1e-3, "f_tol": 1e-4, "max_iters": 400, "checkpoint": None,
                          "n_jobs": 1},
}


# ---------------------------------------------------------------------------
# argument parsing

def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


def _add(p, name, **kw):
    kw.setdefault("default", None)
    p.add_argument("--" + name.replace("_", "-"), dest=name, **kw)


def _model_flags(p):
    _add(p, "family", choices=["gaussian", "dirichlet"])
    _add(p, "delta", type=float)
    _add(p, "lam", type=float, help="Gaussian-latent range")
    _add(p, "nu", type=float, help="Gaussian-latent smoothness in (0, 2]")
    _add(p, "alpha", type=float, help="Dirichlet shape")
    _add(p, "beta", type=float, help="Dirichlet shape")


def _data_flags(p):
    _add(p, "data", help="observation CSV (header of site ids)")
    _add(p, "sites", help="site CSV with columns id,x,y")
    _add(p, "season_column", help="name of an integer season column in the data")
    _add(p, "transform", choices=["none", "empirical", "semiparametric"],
         help="marginal transform applied before fitting (default: data already uniform)")
    _add(p, "threshold_prob", type=float, help="GPD threshold probability")


def _fit_flags(p):
    _add(p, "u_star", type=float, help="censoring threshold on the uniform scale")
    _add(p, "scheme", choices=["some", "any"])
    _add(p, "delta_box", type=_floats, help="lo,hi bounds for delta")
    _add(p, "delta_transform", choices=["logit", "probit"])
    _add(p, "restarts", type=int)
    _add(p, "max_iters", type=int)
    _add(p, "x_tol", type=float)
    _add(p, "f_tol", type=float)
    _add(p, "test_alpha", type=float, help="level of the AD/AI tests")


def _study_flags(p):
    _add(p, "d", type=int)
    _add(p, "n", type=int)
    _add(p, "lam", type=float)
    _add(p, "nu", type=float)
    _add(p, "u_star", type=float)
    _add(p, "deltas", type=_floats)
    _add(p, "n_rep", type=int)
    _add(p, "restarts", type=int)
    _add(p, "x_tol", type=float)
    _add(p, "f_tol", type=float)
    _add(p, "max_iters", type=int)
    _add(p, "checkpoint", help="CSV of finished replicates; rerun resumes from it")
    _add(p, "n_jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xdep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"xdep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON or YAML file of settings")
        p.add_argument("-v", "--verbose", action="count", default=0)
        _add(p, "seed", type=int)
        _add(p, "out", help="output directory")
        return p

    p = command("simulate", "simulate uniform-scale data from the model")
    _model_flags(p)
    _add(p, "d", type=int)
    _add(p, "n", type=int)
    _add(p, "sites", help="site CSV (default: d sites uniform in the unit square)")

    p = command("transform", "transform raw observations to the uniform scale")
    _data_flags(p)
    _add(p, "method", choices=["semiparametric", "empirical"])

    p = command("fit", "censored maximum-likelihood fit")
    _add(p, "family", choices=["gaussian", "dirichlet"])
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--gaussian-only", dest="gaussian_only", action="store_true", default=None,
                   help="freeze delta at 0 (pure Gaussian copula)")
    _add(p, "init", help="fit report whose estimate is the starting point")

    p = command("chi", "empirical and model chi_u curves")
    _data_flags(p)
    _add(p, "u_grid", type=_floats, help="start,stop,count")
    _add(p, "mode", choices=["pairwise", "dwise"])
    _add(p, "pair", type=_ints)
    _add(p, "cond", type=int)
    _add(p, "fit_report", help="fit report; adds the model curve")
    _add(p, "n_mc", type=int)
    _add(p, "u_count", type=float, help="level for the exceedance-count distribution")
    _add(p, "band_level", type=float)
    _add(p, "bootstrap", type=int, help="number of stationary-bootstrap resamples for a band")
    _add(p, "mean_block_length", type=float)

    p = command("test", "AD/AI classification tests from a fit")
    _add(p, "fit_report")
    _add(p, "delta_hat", type=float)
    _add(p, "sd", type=float)
    _add(p, "test_alpha", type=float)

    p = command("bootstrap", "stationary-bootstrap standard errors and intervals")
    _data_flags(p)
    _fit_flags(p)
    _add(p, "family", choices=["gaussian", "dirichlet"])
    _add(p, "fit_report", help="point-estimate report used to warm-start refits")
    _add(p, "n_resamples", type=int)
    _add(p, "mean_block_length", type=float, help="in rows of the data")
    _add(p, "level", type=float)
    _add(p, "n_jobs", type=int)

    p = command("power-study", "rejection rates of the AD/AI tests over a delta grid")
    _study_flags(p)
    _add(p, "test_alpha", type=float)

    p = command("recovery-study", "repeated fits to simulated data")
    _study_flags(p)

    p = command("compare-bivariate", "AIC of asymmetric (Dirichlet) vs symmetric (Gaussian) fits")
    _add(p, "n", type=int)
    _add(p, "alpha", type=float)
    _add(p, "beta", type=float)
    _add(p, "delta", type=float)
    _add(p, "u_star", type=float)
    _add(p, "scheme", choices=["some", "any"])
    _add(p, "n_rep", type=int)
    _add(p, "restarts", type=int)
    _add(p, "x_tol", type=float)
    _add(p, "f_tol", type=float)
    _add(p, "max_iters", type=int)
    _add(p, "checkpoint")
    _add(p, "n_jobs", type=int)
    return parser


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        from_file = load_config_file(args.config)
        unknown = set(from_file) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown settings for {cmd}: {', '.join(sorted(unknown))}")
        cfg.update(from_file)
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    cfg["command"] = cmd
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting '{k}'")


def _check(cond, field, msg):
    if not cond:
        raise ConfigError(f"invalid '{field}': {msg}")


def provenance(cfg) -> list[str]:
    return [f"xdep {__version__}", "config " + json.dumps(cfg, sort_keys=True, default=str)]


def write_json(path, payload, cfg):
    body = {"xdep_version": __version__, "config": cfg, **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=False, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _latent_params(cfg):
    return (cfg["lam"], cfg["nu"]) if cfg["family"] == "gaussian" else (cfg["alpha"], cfg["beta"])


def _load_uniform(cfg):
    """Data file -> (UniformMatrix, SiteSet or None, seasons, per-site GPD fits)."""
    _need(cfg, "data")
    for k in ("data", "sites"):
        if cfg.get(k) and not Path(cfg[k]).exists():
            raise ConfigError(f"'{k}' file {cfg[k]} does not exist")
    obs, sites = load_dataset(cfg["data"], cfg.get("sites"), season_column=cfg.get("season_column"))
    gpd = None
    if cfg.get("transform", "none") == "empirical":
        U = empirical_transform(obs)
    elif cfg.get("transform", "none") == "semiparametric":
        U, gpd = semiparametric_transform(obs, cfg["threshold_prob"])
    else:
        try:
            U = UniformMatrix(obs.values)
        except ValueError as exc:
            raise DataError(f"{cfg['data']}: {exc}; pass --transform to convert raw data") from exc
    return U, sites, obs.seasons, gpd


def _read_report(path):
    if not Path(path).exists():
        raise ConfigError(f"fit report {path} does not exist")
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _params_from_report(rep) -> ModelParams:
    psi = dict(rep["fit"]["psi_hat"])
    fam = psi.pop("family")
    delta = psi.pop("delta")
    names = ("lam", "nu") if fam == "gaussian" else ("alpha", "beta")
    return ModelParams(delta, tuple(psi[n] for n in names), fam)


def _fit_options(cfg) -> FitOptions:
    fixed = ()
    if cfg.get("gaussian_only"):
        fixed = (("delta", 0.0),)
    box = tuple(cfg["delta_box"])
    _check(len(box) == 2 and 0 <= box[0] < box[1] <= 1, "delta_box", "need 0 <= lo < hi <= 1")
    return FitOptions(delta_transform=cfg["delta_transform"], delta_box=box, fixed=fixed,
                      qmc_seed=cfg["seed"])


def _optimizer(cfg) -> OptimizerConfig:
    return OptimizerConfig(max_iters=cfg["max_iters"], x_tol=cfg["x_tol"], f_tol=cfg["f_tol"],
                           restarts=cfg["restarts"], seed=cfg["seed"])


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg) -> int:
    _check(cfg["n"] >= 1, "n", "must be at least 1")
    _check(0 <= cfg["delta"] <= 1, "delta", "must lie in [0, 1]")
    rng = np.random.default_rng(cfg["seed"])
    if cfg.get("sites"):
        sites = read_sites(cfg["sites"])
    else:
        _check(cfg["d"] >= 2, "d", "need at least 2 sites")
        sites = SiteSet.uniform_square(cfg["d"], rng)
    try:
        latent = make_latent(cfg["family"], _latent_params(cfg), sites, sites.d)
        params = ModelParams(cfg["delta"], _latent_params(cfg), cfg["family"])
    except (ValueError, CapabilityError) as exc:
        raise ConfigError(str(exc)) from exc
    U = CopulaModel(cfg["delta"], latent).simulate(cfg["n"], rng)
    out = _outdir(cfg)
    prov = provenance(cfg)
    write_matrix_csv(out / "data.csv", U, sites.ids, comments=prov)
    write_sites(out / "sites.csv", sites, comments=prov)
    write_json(out / "truth.json", {"truth": params.as_dict(), "seed": cfg["seed"],
                                    "n": cfg["n"], "d": sites.d}, cfg)
    log.info("wrote %d x %d sample to %s", cfg["n"], sites.d, out)
    return EXIT_OK


def cmd_transform(cfg) -> int:
    cfg = {**cfg, "transform": cfg["method"]}
    U, sites, seasons, gpd = _load_uniform(cfg)
    obs, _ = load_dataset(cfg["data"], None, season_column=cfg.get("season_column"))
    out = _outdir(cfg)
    extra = {"season": list(seasons)} if seasons is not None else None
    write_matrix_csv(out / "uniform.csv", U.values, obs.site_ids, extra, comments=provenance(cfg))
    if gpd is not None:
        write_json(out / "gpd.json", {"sites": {sid: g.to_dict() for sid, g in zip(obs.site_ids, gpd)}},
                   cfg)
    return EXIT_OK


def cmd_fit(cfg) -> int:
    _check(0 < cfg["u_star"] < 1, "u_star", "must lie in (0, 1)")
    _check(0 < cfg["test_alpha"] < 1, "test_alpha", "must lie in (0, 1)")
    U, sites, _, gpd = _load_uniform(cfg)
    family = cfg["family"]
    if cfg.get("gaussian_only") and family != "gaussian":
        raise ConfigError("--gaussian-only needs the gaussian family")
    if family == "gaussian" and sites is None:
        raise ConfigError("the gaussian family needs --sites")
    spec = CensorSpec.common(cfg["u_star"], U.d, CensorScheme(cfg["scheme"]))
    init = _params_from_report(_read_report(cfg["init"])) if cfg.get("init") else None
    options = _fit_options(cfg)
    fit = fit_mle(U, spec, family, sites, init=init, cfg=_optimizer(cfg), options=options)
    payload = {"fit": fit.to_dict(), "aic": aic(fit)}
    try:
        payload["test"] = dep_class_test(fit, cfg["test_alpha"]).to_dict()
    except TestUnavailable as exc:
        payload["test"] = {"unavailable": str(exc)}
    if gpd is not None:
        payload["margins"] = [g.to_dict() for g in gpd]
    out = _outdir(cfg)
    write_json(out / "fit.json", payload, cfg)
    log.info("delta_hat = %.4f, loglik = %.3f", fit.psi_hat.delta, fit.loglik)
    if not fit.converged:
        log.warning("optimizer did not converge: %s", fit.message)
        return EXIT_PARTIAL
    return EXIT_OK


def _u_grid(spec):
    spec = list(spec)
    if len(spec) == 3 and float(spec[2]).is_integer() and spec[2] >= 2 and spec[1] > spec[0]:
        return np.linspace(spec[0], spec[1], int(spec[2]))
    return np.asarray(spec, float)


def cmd_chi(cfg) -> int:
    U, sites, seasons, _ = _load_uniform(cfg)
    grid = _u_grid(cfg["u_grid"])
    _check(np.all((grid > 0) & (grid < 1)) and np.all(np.diff(grid) > 0), "u_grid",
           "must be increasing inside (0, 1)")
    pair = tuple(cfg["pair"])
    _check(len(pair) == 2 and all(0 <= j < U.d for j in pair) and pair[0] != pair[1], "pair",
           f"two distinct columns in 0..{U.d - 1}")
    emp = empirical_chi_curve(U, grid, cfg["mode"], pair, cfg["cond"], cfg["band_level"])
    cols = {"u": grid, "empirical": emp.values, "empirical_lo": emp.lo, "empirical_hi": emp.hi}
    counts = {"k": np.arange(1, U.d + 1),
              "data": exceedance_count_distribution(U, cfg["u_count"])}
    status = EXIT_OK
    if cfg["bootstrap"]:
        plan = BootstrapPlan(cfg["mean_block_length"], cfg["bootstrap"],
                             tuple(seasons) if seasons is not None else None, cfg["seed"])
        from .resample import resample_indices
        reps = np.array([empirical_chi_curve(U.values[idx], grid, cfg["mode"], pair, cfg["cond"]).values
                         for idx in resample_indices(U.n, plan)])
        a = (1 - cfg["band_level"]) / 2
        with np.errstate(invalid="ignore"):
            cols["bootstrap_lo"] = np.nanquantile(reps, a, axis=0)
            cols["bootstrap_hi"] = np.nanquantile(reps, 1 - a, axis=0)
    if cfg.get("fit_report"):
        rep = _read_report(cfg["fit_report"])
        psi = _params_from_report(rep)
        if psi.family == "gaussian" and sites is None:
            raise ConfigError("a gaussian model curve needs --sites")
        latent = make_latent(psi.family, psi.latent, sites, U.d)
        model = CopulaModel(psi.delta, latent)
        mc = model_chi_u_curve(model, grid, cfg["n_mc"], cfg["seed"], cfg["mode"], pair, cfg["cond"],
                               cfg["band_level"])
        cols.update({"model": mc.values, "model_lo": mc.lo, "model_hi": mc.hi})
        sim = model.simulate(cfg["n_mc"], np.random.default_rng(cfg["seed"] + 1))
        counts["model"] = exceedance_count_distribution(sim, cfg["u_count"])
    out = _outdir(cfg)
    names = list(cols)
    write_matrix_csv(out / "chi.csv", np.column_stack([cols[k] for k in names]), names,
                     comments=provenance(cfg))
    names = list(counts)
    write_matrix_csv(out / "exceedance_counts.csv", np.column_stack([counts[k] for k in names]),
                     names, comments=provenance(cfg))
    if np.isnan(emp.values).any():
        log.warning("chi_u undefined at %d grid points (no exceedances)", int(np.isnan(emp.values).sum()))
    return status


def cmd_test(cfg) -> int:
    alpha = cfg["test_alpha"]
    _check(0 < alpha < 1, "test_alpha", "must lie in (0, 1)")
    if cfg.get("fit_report"):
        rep = _read_report(cfg["fit_report"])
        d_hat = rep["fit"]["psi_hat"]["delta"]
        sd = rep["fit"]["sd_delta"]
    else:
        _need(cfg, "delta_hat", "sd")
        d_hat, sd = cfg["delta_hat"], cfg["sd"]
    try:
        res = dep_class_test(d_hat, alpha, sd=sd)
    except TestUnavailable as exc:
        raise ConfigError(f"test unavailable: {exc}") from exc
    write_json(_outdir(cfg) / "test.json", {"test": res.to_dict()}, cfg)
    print(json.dumps(res.to_dict(), default=_json_default))
    return EXIT_OK


def cmd_bootstrap(cfg) -> int:
    U, sites, seasons, _ = _load_uniform(cfg)
    family = cfg["family"]
    if family == "gaussian" and sites is None:
        raise ConfigError("the gaussian family needs --sites")
    init = _params_from_report(_read_report(cfg["fit_report"])) if cfg.get("fit_report") else None
    plan = BootstrapPlan(cfg["mean_block_length"], cfg["n_resamples"],
                         tuple(seasons) if seasons is not None else None, cfg["seed"])
    spec = CensorSpec.common(cfg["u_star"], U.d, CensorScheme(cfg["scheme"]))
    res = bootstrap_ci(U, spec, family, plan, _optimizer(cfg), sites, init, _fit_options(cfg),
                       cfg["level"], cfg["n_jobs"],
                       progress=lambda i, n: log.info("resample %d/%d", i, n))
    out = _outdir(cfg)
    res.to_csv(out / "bootstrap.csv", provenance(cfg))
    write_json(out / "bootstrap_summary.json", {"bootstrap": res.summary()}, cfg)
    return EXIT_PARTIAL if res.unreliable else EXIT_OK


def _study_design(cfg) -> studies.StudyDesign:
    _check(cfg["d"] >= 2, "d", "need at least 2 sites")
    _check(cfg["n_rep"] >= 1, "n_rep", "must be at least 1")
    return studies.StudyDesign(d=cfg["d"], n=cfg["n"], lam=cfg["lam"], nu=cfg["nu"],
                               u_star=cfg["u_star"], seed=cfg["seed"], restarts=cfg["restarts"],
                               x_tol=cfg["x_tol"], f_tol=cfg["f_tol"], max_iters=cfg["max_iters"])


def _checkpoint(cfg, default_name):
    return cfg.get("checkpoint") or str(_outdir(cfg) / default_name)


def _progress(i, n):
    log.info("replicate %d/%d", i, n)


def cmd_recovery_study(cfg) -> int:
    design = _study_design(cfg)
    rows = studies.run_gaussian_replicates(design, cfg["deltas"], cfg["n_rep"],
                                           _checkpoint(cfg, "recovery_checkpoint.csv"),
                                           cfg["n_jobs"], _progress)
    summ = studies.recovery_summary(rows)
    out = _outdir(cfg)
    names = ["delta_true", "n_ok", "n_failed", "median", "median_abs_error", "iqr"]
    write_matrix_csv(out / "recovery.csv", [[r[k] for k in names] for r in summ], names,
                     comments=provenance(cfg))
    return EXIT_PARTIAL if any(r["n_failed"] for r in summ) else EXIT_OK


def cmd_power_study(cfg) -> int:
    _check(0 < cfg["test_alpha"] < 1, "test_alpha", "must lie in (0, 1)")
    design = _study_design(cfg)
    rows = studies.run_gaussian_replicates(design, cfg["deltas"], cfg["n_rep"],
                                           _checkpoint(cfg, "power_checkpoint.csv"),
                                           cfg["n_jobs"], _progress)
    summ = studies.power_summary(rows, cfg["test_alpha"])
    out = _outdir(cfg)
    names = ["delta_true", "n", "n_unavailable", "reject_AD", "reject_AI"]
    write_matrix_csv(out / "power.csv", [[r[k] for k in names] for r in summ], names,
                     comments=[*provenance(cfg), f"alpha {cfg['test_alpha']}"])
    return EXIT_PARTIAL if any(r["n_unavailable"] for r in summ) else EXIT_OK


def cmd_compare_bivariate(cfg) -> int:
    _check(cfg["n_rep"] >= 1, "n_rep", "must be at least 1")
    design = studies.BivariateDesign(n=cfg["n"], alpha=cfg["alpha"], beta=cfg["beta"],
                                     delta=cfg["delta"], u_star=cfg["u_star"], scheme=cfg["scheme"],
                                     seed=cfg["seed"], restarts=cfg["restarts"], x_tol=cfg["x_tol"],
                                     f_tol=cfg["f_tol"], max_iters=cfg["max_iters"])
    rows = studies.run_bivariate_replicates(design, cfg["n_rep"],
                                            _checkpoint(cfg, "compare_checkpoint.csv"),
                                            cfg["n_jobs"], _progress)
    out = _outdir(cfg)
    write_json(out / "compare.json", {"summary": studies.comparison_summary(rows), "rows": rows}, cfg)
    return EXIT_PARTIAL if any(r["status"] != "ok" for r in rows) else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "transform": cmd_transform, "fit": cmd_fit, "chi": cmd_chi,
    "test": cmd_test, "bootstrap": cmd_bootstrap, "power-study": cmd_power_study,
    "recovery-study": cmd_recovery_study, "compare-bivariate": cmd_compare_bivariate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (QuadratureError, OptimizerFailure, LikelihoodError, NearSingularError,
            FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, CapabilityError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        log.error("interrupted; checkpointed results are kept")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
