"""Domain types, dataset containers and site geometry."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform


class DataError(ValueError):
    """Malformed input data; carries the (row, col) location when known."""

    def __init__(self, message, row=None, col=None):
        loc = ""
        if row is not None:
            loc = f" at row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(message + loc)
        self.row, self.col = row, col


@dataclass(frozen=True, eq=False)
class SiteSet:
    coords: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError("coords must be a list of (x, y) pairs")
        if c.shape[0] < 2:
            raise ValueError("need at least 2 sites")
        if not np.isfinite(c).all():
            raise ValueError("site coordinates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(f"s{j + 1}" for j in range(len(c)))
        if len(ids) != len(c):
            raise ValueError("ids and coords differ in length")
        object.__setattr__(self, "ids", ids)
        d = distance_matrix_unchecked(c)
        iu = np.triu_indices(len(c), 1)
        zero = np.flatnonzero(d[iu] == 0)
        if zero.size:
            j, k = iu[0][zero[0]], iu[1][zero[0]]
            raise ValueError(f"duplicate sites {ids[j]} and {ids[k]} (zero distance)")

    @property
    def d(self) -> int:
        return self.coords.shape[0]

    def subset(self, idx) -> "SiteSet":
        idx = list(idx)
        return SiteSet(self.coords[idx], tuple(self.ids[i] for i in idx))

    @classmethod
    def uniform_square(cls, d: int, rng: np.random.Generator) -> "SiteSet":
        return cls(rng.random((d, 2)))


def distance_matrix_unchecked(coords) -> np.ndarray:
    return squareform(pdist(np.asarray(coords, float)))


def distance_matrix(sites: SiteSet) -> np.ndarray:
    """Euclidean inter-site distances (symmetric, zero diagonal)."""
    return distance_matrix_unchecked(sites.coords)


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    values: np.ndarray
    site_ids: tuple
    time_index: tuple = ()
    seasons: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError("no observations")
        if not np.isfinite(v).all():
            r, c = np.argwhere(~np.isfinite(v))[0]
            raise DataError("non-finite observation", row=int(r) + 1, col=int(c) + 1)
        if len(self.site_ids) != v.shape[1]:
            raise DataError(f"{v.shape[1]} columns but {len(self.site_ids)} site ids")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.time_index:
            object.__setattr__(self, "time_index", tuple(range(1, v.shape[0] + 1)))
        if self.seasons is not None:
            s = np.asarray(self.seasons, int)
            if s.shape != (v.shape[0],) or np.any(np.diff(s) < 0):
                raise DataError("season labels must be one per row and non-decreasing")
            object.__setattr__(self, "seasons", s)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class UniformMatrix:
    values: np.ndarray
    ks_bound: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("uniform data must be an n x d matrix")
        if not (np.all(v > 0) and np.all(v < 1)):
            raise ValueError("uniform-scale entries must lie strictly inside (0, 1)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.ks_bound is not None:
            worst = max(self.ks_distances())
            if worst > self.ks_bound:
                raise ValueError(f"column KS distance {worst:.3g} exceeds bound {self.ks_bound}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def ks_distances(self) -> list[float]:
        from scipy.stats import kstest
        return [float(kstest(col, "uniform").statistic) for col in self.values.T]


class CensorScheme(enum.Enum):
    SOME_OVER_THRESHOLD = "some"
    ANY_OVER_THRESHOLD = "any"


@dataclass(frozen=True, eq=False)
class CensorSpec:
    thresholds: np.ndarray
    scheme: CensorScheme = CensorScheme.SOME_OVER_THRESHOLD

    def __post_init__(self):
        t = np.atleast_1d(np.array(self.thresholds, dtype=float))
        if not (np.all(t > 0) and np.all(t < 1)):
            raise ValueError("thresholds must lie strictly inside (0, 1)")
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "scheme", CensorScheme(self.scheme))

    @classmethod
    def common(cls, u: float, d: int, scheme=CensorScheme.SOME_OVER_THRESHOLD) -> "CensorSpec":
        return cls(np.full(d, float(u)), scheme)


# Parameter boxes for each latent family, in the order stored in ModelParams.latent
LATENT_BOXES = {
    "gaussian": (("lam", 0.0, math.inf), ("nu", 0.0, 2.0)),
    "dirichlet": (("alpha", 0.0, math.inf), ("beta", 0.0, math.inf)),
}


@dataclass(frozen=True)
class ModelParams:
    delta: float
    latent: tuple
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in LATENT_BOXES:
            raise ValueError(f"unknown latent family {self.family!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        lat = tuple(float(x) for x in self.latent)
        box = LATENT_BOXES[self.family]
        if len(lat) != len(box):
            raise ValueError(f"{self.family} latent needs {len(box)} parameters")
        for val, (name, lo, hi) in zip(lat, box):
            upper_ok = val <= hi if name == "nu" else val < hi
            if not (val > lo and upper_ok):
                raise ValueError(f"{name}={val} outside its box ({lo}, {hi}]")
        object.__setattr__(self, "latent", lat)
        object.__setattr__(self, "delta", float(self.delta))

    def as_dict(self) -> dict:
        names = [b[0] for b in LATENT_BOXES[self.family]]
        return {"family": self.family, "delta": self.delta, **dict(zip(names, self.latent))}


# --------------------------------------------------------------------------
# CSV input / output

def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        val = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r}", row=row, col=col) from None
    if not math.isfinite(val):
        raise DataError(f"non-finite cell {cell!r}", row=row, col=col)
    return val


def _data_lines(fh):
    """Skip '#' comment lines (provenance headers written by the CLI)."""
    return (line for line in fh if not line.startswith("#"))


def read_observations(path, season_column: str | None = None) -> ObservationMatrix:
    """Read an observation CSV: header of site ids, one row per time point.

    Row numbers in errors count the header as row 1. A column named
    ``season_column`` (if present) holds integer season labels and is not
    treated as a site.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(_data_lines(fh)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no observations")
    header = [h.strip() for h in rows[0]]
    season_idx = header.index(season_column) if season_column and season_column in header else None
    site_cols = [j for j in range(len(header)) if j != season_idx]
    if len(rows) < 2:
        raise DataError(f"{path}: no observations")
    values, seasons = [], []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: expected {len(header)} cells, found {len(r)}", row=i)
        values.append([_parse_float(r[j].strip(), i, j + 1) for j in site_cols])
        if season_idx is not None:
            s = _parse_float(r[season_idx].strip(), i, season_idx + 1)
            if s != int(s):
                raise DataError("season label must be an integer", row=i, col=season_idx + 1)
            seasons.append(int(s))
    return ObservationMatrix(np.array(values), tuple(header[j] for j in site_cols),
                             seasons=np.array(seasons) if season_idx is not None else None)


def read_sites(path) -> SiteSet:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_data_lines(fh))
        if reader.fieldnames is None or not {"id", "x", "y"} <= set(reader.fieldnames):
            raise DataError(f"{path}: site file needs columns id,x,y")
        ids, coords = [], []
        for i, r in enumerate(reader, start=2):
            ids.append(r["id"])
            coords.append([_parse_float(r["x"], i, "x"), _parse_float(r["y"], i, "y")])
    if not coords:
        raise DataError(f"{path}: no sites")
    return SiteSet(np.array(coords), tuple(ids))


def load_dataset(data_path, sites_path=None, fmt: str = "csv",
                 season_column: str | None = None):
    """Load observations and (optionally) their sites; returns ``(obs, sites)``."""
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    obs = read_observations(data_path, season_column=season_column)
    sites = None
    if sites_path is not None:
        sites = read_sites(sites_path)
        if sites.d != obs.d:
            raise DataError(f"{obs.d} data columns but {sites.d} sites")
        if set(sites.ids) == set(obs.site_ids):
            order = [sites.ids.index(s) for s in obs.site_ids]
            sites = sites.subset(order)
    return obs, sites


def write_matrix_csv(path, values, header, extra_columns: dict | None = None,
                     comments=()) -> None:
    values = np.asarray(values)
    extra_columns = extra_columns or {}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(list(header) + list(extra_columns))
        cols = list(extra_columns.values())
        for i, row in enumerate(values):
            w.writerow([repr(float(x)) for x in row] + [c[i] for c in cols])


def write_observations(path, obs: ObservationMatrix, comments=()) -> None:
    extra = {"season": list(obs.seasons)} if obs.seasons is not None else None
    write_matrix_csv(path, obs.values, obs.site_ids, extra, comments)


def write_sites(path, sites: SiteSet, comments=()) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for sid, (x, y) in zip(sites.ids, sites.coords):
            w.writerow([sid, repr(float(x)), repr(float(y))])
