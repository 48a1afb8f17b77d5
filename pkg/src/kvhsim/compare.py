"""Per-checkpoint comparison of two run directories.

Report schema (``report.json``)::

    {"run_a": str, "run_b": str, "source_a": str, "source_b": str,
     "checkpoints": [{"t", "bloch_deviation", "purity_gap", "energy_drift_a",
                      "energy_drift_b", "min_density_a", "min_density_b",
                      "density_l1", "field_l2"}, ...],
     "summary": {"max_<metric>": float, ..., "runtime_a", "runtime_b"},
     "figures": [paths]}

``purity_gap`` is purity(A) - purity(B). Unavailable metrics are ``null``
in JSON and empty in ``metrics.csv``. Density comparisons happen on run A's
grid; a quantum reference run B is re-sampled there from its oscillator
density matrix through the closed-form Wigner kernels.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import KvhError
from .experiments import _atomic_json, read_timeseries
from .grid import make_grid
from .reference import wigner_transform
from .snapshot import read_snapshot

METRICS = ("t", "bloch_deviation", "purity_gap", "energy_drift_a", "energy_drift_b",
           "min_density_a", "min_density_b", "density_l1", "field_l2")
T_TOL = 1e-9


class ComparisonError(KvhError, ValueError):
    """Runs cannot be compared (missing files, misaligned checkpoints)."""


@dataclass
class RunData:
    directory: Path
    manifest: dict
    rows: list

    @property
    def source(self):
        return self.manifest.get("source", self.manifest.get("model", "?"))

    @property
    def times(self):
        return [c["t"] for c in self.manifest["checkpoints"]]

    def grid(self):
        g = self.manifest["grid"]
        return make_grid(g["nq"], g["np"], ((g["q_min"], g["q_max"]), (g["p_min"], g["p_max"])),
                         hbar=g["hbar"])

    def file(self, k, name):
        rel = self.manifest["checkpoints"][k]["files"].get(name)
        return None if rel is None else self.directory / rel

    def energy_scale(self):
        chk = self.manifest.get("checks", {}).get("energy_drift")
        return chk["scale"] if chk else float("nan")


def load_run(directory):
    d = Path(directory)
    for name in ("manifest.json", "timeseries.csv"):
        if not (d / name).exists():
            raise ComparisonError(f"{d}: missing {name}")
    with open(d / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("status") != "ok":
        raise ComparisonError(f"{d}: run status is {manifest.get('status')!r}")
    return RunData(d, manifest, read_timeseries(d / "timeseries.csv"))


@dataclass
class ComparisonReport:
    run_a: str
    run_b: str
    source_a: str
    source_b: str
    checkpoints: list
    summary: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)

    def column(self, name):
        return np.array([np.nan if c[name] is None else c[name] for c in self.checkpoints])

    def to_dict(self):
        return {"run_a": self.run_a, "run_b": self.run_b, "source_a": self.source_a,
                "source_b": self.source_b, "checkpoints": self.checkpoints,
                "summary": self.summary, "figures": self.figures}


def _finite(x):
    return x is not None and math.isfinite(x)


def _or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _bloch(row):
    return np.array([row["n_x"], row["n_y"], row["n_z"]])


def _density_on(run, k, grid, cache):
    """Classical density of checkpoint ``k`` of ``run`` on ``grid``, or None."""
    osc = run.file(k, "rho_osc")
    if osc is not None:
        tail = run.manifest["config"]["checks"]["wigner_tail_tol"]
        return wigner_transform(np.load(osc), grid, tail).W
    f = run.file(k, "rho_c")
    if f is None:
        return None
    rho = read_snapshot(f).real
    own = cache.setdefault(id(run), run.grid())
    if own.shape == grid.shape and np.allclose(
            [own.q_min, own.q_max, own.p_min, own.p_max],
            [grid.q_min, grid.q_max, grid.p_min, grid.p_max]):
        return rho
    inside = ((grid.Q >= own.q_min) & (grid.Q < own.q_max)
              & (grid.P >= own.p_min) & (grid.P < own.p_max))
    Q, P = np.broadcast_arrays(grid.Q, grid.P)
    return np.where(inside, own.interpolate(rho, Q, P), 0.0)


def _primary_fields(run, k):
    files = run.manifest["checkpoints"][k]["files"]
    names = sorted(n for n in files if n == "chi" or n == "P" or n.startswith("U"))
    if not names:
        return None
    return np.array([read_snapshot(run.directory / files[n]) for n in names])


def compare_runs(dir_a, dir_b, out_dir=None, render=True):
    """Compare two runs checkpoint by checkpoint and write the report."""
    a, b = load_run(dir_a), load_run(dir_b)
    ta, tb = a.times, b.times
    if len(ta) != len(tb) or any(abs(x - y) > T_TOL for x, y in zip(ta, tb)):
        raise ComparisonError(f"misaligned checkpoints: {ta} vs {tb}")
    if len(a.rows) != len(ta) or len(b.rows) != len(tb):
        raise ComparisonError("time series and manifest disagree on checkpoint count")
    grid = a.grid()
    cache = {}
    scale_a, scale_b = a.energy_scale(), b.energy_scale()
    e0a, e0b = a.rows[0]["energy"], b.rows[0]["energy"]
    out = []
    last_density = None
    for k, t in enumerate(ta):
        ra, rb = a.rows[k], b.rows[k]
        m = {"t": t}
        na, nb = _bloch(ra), _bloch(rb)
        ok = np.all(np.isfinite(na)) and np.all(np.isfinite(nb))
        m["bloch_deviation"] = float(np.linalg.norm(na - nb)) if ok else None
        m["purity_gap"] = _or_none(ra["purity"] - rb["purity"])
        m["energy_drift_a"] = _or_none(abs(ra["energy"] - e0a) / max(abs(e0a), scale_a)) \
            if math.isfinite(scale_a) else None
        m["energy_drift_b"] = _or_none(abs(rb["energy"] - e0b) / max(abs(e0b), scale_b)) \
            if math.isfinite(scale_b) else None
        m["min_density_a"] = _or_none(ra["min_rho_c"])
        m["min_density_b"] = _or_none(rb["min_rho_c"])
        da, db = _density_on(a, k, grid, cache), _density_on(b, k, grid, cache)
        if da is not None and db is not None:
            m["density_l1"] = float(np.sum(np.abs(da - db)) * grid.cell)
            last_density = (t, da, db)
        else:
            m["density_l1"] = None
        fa, fb = _primary_fields(a, k), _primary_fields(b, k)
        if fa is not None and fb is not None and fa.shape == fb.shape:
            m["field_l2"] = float(np.linalg.norm(fa - fb) / max(np.linalg.norm(fb), 1e-300))
        else:
            m["field_l2"] = None
        out.append(m)
    rep = ComparisonReport(str(a.directory), str(b.directory), a.source, b.source, out)
    for name in METRICS[1:]:
        vals = [c[name] for c in out if _finite(c[name])]
        if not vals:
            continue
        if name.startswith("min_density"):
            rep.summary[name] = float(min(vals))
        elif name == "purity_gap":
            rep.summary["max_purity_gap"] = float(max(vals))
            rep.summary["min_purity_gap"] = float(min(vals))
        else:
            rep.summary[f"max_{name}"] = float(max(vals))
    rep.summary["runtime_a"] = a.manifest.get("wall_time")
    rep.summary["runtime_b"] = b.manifest.get("wall_time")

    dest = Path(out_dir) if out_dir else a.directory / f"compare_{b.directory.name}"
    dest.mkdir(parents=True, exist_ok=True)
    if render:
        from .plotting import plot_comparison
        rep.figures = plot_comparison(dest, a.rows, b.rows, (a.source, b.source),
                                      last_density, a.manifest["grid"])
    _atomic_json(dest / "report.json", rep.to_dict())
    with open(dest / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS)
        for c in out:
            w.writerow(["" if c[n] is None else repr(c[n]) for n in METRICS])
    return rep
