"""Config-driven experiment runner.

A run writes into its output directory:

    manifest.json      config echo, versions, wall time, checkpoints, checks
    timeseries.csv     t, n_x, n_y, n_z, purity, energy, total_norm,
                       min_rho_c, boundary_mass, source
    snapshots/         binary fields per checkpoint (``<name>_<index>.bin``)
    error.json         only on an invariant abort

Relative output directories are resolved against ``$KVHSIM_OUTPUT_ROOT``
when it is set.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import emit_config
from .errors import BoundaryMassExceeded, InvariantViolation
from .grid import boundary_mass
from .hamiltonian import HybridHamiltonian
from .hybrid import (QCWEStepper, QuantumDensityMatrix, bloch_and_purity, diagonal_channel_solve,
                     hybrid_classical_density, hybrid_energy, quantum_density)
from .koopman import KoopmanStepper, characteristics_oracle, momentum_map_density
from .nonlinear import NQCLE, density_from_wavefunction, integrated_density, node_min_eigenvalue
from .reference import (CompositeQuantumState, EhrenfestState, QuantumPropagator,
                        build_composite_hamiltonian, ehrenfest_energy, ehrenfest_step,
                        oscillator_reduced_density, spin_reduced_density, wigner_transform)
from .snapshot import write_snapshot
from .states import GaussianState, HybridState, MatchedState, normalized, window_radii

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "KVHSIM_OUTPUT_ROOT"
COLUMNS = ("t", "n_x", "n_y", "n_z", "purity", "energy", "total_norm", "min_rho_c",
           "boundary_mass", "source")
SOURCE_TAG = {"quantum_ref": "quantum"}
NAN = float("nan")


# -- initial data -----------------------------------------------------------

def classical_state(cfg, grid):
    """Normalised scalar initial wavefunction from ``[initial]``."""
    ini = cfg["initial"]
    hbar = grid.hbar
    if ini["state"] == "matched":
        r1, r2 = window_radii(grid, ini["stretch"], ini["window_inner"], ini["window_outer"])
        chi = MatchedState(r1, r2, hbar)
    else:
        chi = GaussianState(ini["q0"], ini["p0"], ini["width"], ini["alpha"], ini["kq"],
                            ini["kp"], hbar)
    return normalized(chi, grid)


def unit_spinor(cfg):
    s = np.asarray(cfg["initial"]["spinor"], dtype=complex)
    return s / np.linalg.norm(s)


def hybrid_state(cfg, grid):
    chi = classical_state(cfg, grid)
    return normalized(HybridState(chi, tuple(unit_spinor(cfg))), grid)


def coherent_amplitudes(n_osc, q0, p0, hbar=1.0):
    """Number-basis coherent state centred at ``(q0, p0)``."""
    alpha = (q0 + 1j * p0) / math.sqrt(2 * hbar)
    m = np.arange(n_osc)
    logfact = np.array([math.lgamma(k + 1) for k in m])
    with np.errstate(divide="ignore"):
        logmag = m * np.log(abs(alpha)) if alpha != 0 else np.where(m == 0, 0.0, -np.inf)
    phase = np.exp(1j * m * np.angle(alpha))
    c = np.exp(logmag - 0.5 * logfact - 0.5 * abs(alpha) ** 2) * phase
    return c / np.linalg.norm(c)


# -- per-model drivers ------------------------------------------------------

def _row(t, n_vec=None, purity=NAN, energy=NAN, norm=NAN, min_rho=NAN, bmass=NAN):
    n = (NAN, NAN, NAN) if n_vec is None else tuple(float(x) for x in n_vec)
    return {"t": float(t), "n_x": n[0], "n_y": n[1], "n_z": n[2], "purity": float(purity),
            "energy": float(energy), "total_norm": float(norm), "min_rho_c": float(min_rho),
            "boundary_mass": float(bmass)}


class _Driver:
    """Advance to each checkpoint, report a CSV row and the fields to snapshot."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.H = cfg.hamiltonian()
        self.stats = {}

    def energy_scale(self):
        return NAN

    def _track(self, key, value, mode="min"):
        old = self.stats.get(key)
        if old is None or (value < old if mode == "min" else value > old):
            self.stats[key] = float(value)

    def _check_psd(self, rho, t):
        lam = rho.min_eigenvalue()
        self._track("min_rho_eigenvalue", lam)
        tol = self.cfg["checks"]["psd_tol"]
        if lam < -tol:
            raise InvariantViolation("psd", f"quantum density eigenvalue {lam:.3e} < -{tol:g}",
                                     t=t, min_eigenvalue=lam)

    def _check_boundary(self, bm, t):
        tol = self.cfg["checks"]["boundary_mass_tol"]
        if bm > tol:
            raise BoundaryMassExceeded(f"boundary-band mass {bm:.3e} > {tol:g} at t={t:g}; "
                                       "enlarge the box", t=t, boundary_mass=bm)


class _KoopmanDriver(_Driver):

    def __init__(self, cfg):
        super().__init__(cfg)
        self.kvn = cfg.model == "kvn"
        self.state = classical_state(cfg, self.grid)
        s = cfg["solver"]
        self.exact = s["method"] == "exact"
        self.chi = self.state(self.grid.Q, self.grid.P).astype(complex)
        if not self.exact:
            self.stepper = KoopmanStepper(self.grid, self.H, cfg["time"]["dt"],
                                          "rk4_kvn" if self.kvn else "rk4_kvh",
                                          s["cfl"], s["cfl_action"])
        self.Hh = HybridHamiltonian.scalar(self.H)

    def advance(self, t, nsteps):
        if self.exact:
            self.chi = characteristics_oracle(self.grid, self.state, self.H, t, kvn=self.kvn)
        else:
            self.chi = self.stepper.advance(self.chi, nsteps)

    def density(self):
        if self.kvn:
            return np.abs(self.chi) ** 2
        return momentum_map_density(self.grid, self.chi)

    def energy(self):
        if self.kvn:
            return float(self.grid.integrate(np.abs(self.chi) ** 2 * self.H.values(self.grid)).real)
        return hybrid_energy(self.grid, self.chi[None], self.Hh)

    def energy_scale(self):
        return float(self.grid.integrate(np.abs(self.chi) ** 2 * np.abs(self.H.values(self.grid))))

    def observe(self, t):
        g = self.grid
        rho = self.density()
        bm = boundary_mass(g, self.chi, self.cfg["checks"]["margin_fraction"])
        self._check_boundary(bm, t)
        self._track("min_rho_c", rho.min())
        self._track("max_mass_defect", abs(g.integrate(rho) - 1.0), "max")
        row = _row(t, energy=self.energy(), norm=g.norm2(self.chi), min_rho=rho.min(), bmass=bm)
        return row, {"chi": self.chi, "rho_c": rho}


class _QCWEDriver(_Driver):

    def __init__(self, cfg):
        super().__init__(cfg)
        self.state = hybrid_state(cfg, self.grid)
        s = cfg["solver"]
        self.exact = s["method"] == "exact"
        self.U = np.asarray(self.state(self.grid.Q, self.grid.P), dtype=complex)
        if not self.exact:
            self.stepper = QCWEStepper(self.grid, self.H, cfg["time"]["dt"], s["cfl"],
                                       s["cfl_action"])

    def advance(self, t, nsteps):
        if self.exact:
            self.U = diagonal_channel_solve(self.grid, self.state, self.H, t)
        else:
            self.U = self.stepper.advance(self.U, nsteps)

    def energy_scale(self):
        Hv = self.H.arrays(self.grid)[0]
        w = sum(np.abs(self.U[j]) ** 2 * np.abs(Hv[j, j]) for j in range(self.H.n))
        return float(self.grid.integrate(w))

    def observe(self, t):
        g = self.grid
        rho_q = quantum_density(g, self.U)
        self._check_psd(rho_q, t)
        b = bloch_and_purity(rho_q)
        rho_c = hybrid_classical_density(g, self.U).rho
        bm = boundary_mass(g, self.U, self.cfg["checks"]["margin_fraction"])
        self._check_boundary(bm, t)
        self._track("min_rho_c", rho_c.min())
        self._track("max_mass_defect", abs(g.integrate(rho_c) - 1.0), "max")
        row = _row(t, b.n_vec, b.purity, hybrid_energy(g, self.U, self.H), g.norm2(self.U),
                   rho_c.min(), bm)
        fields = {f"U{j}": self.U[j] for j in range(self.H.n)}
        fields["rho_c"] = rho_c
        return row, fields


class _NQCLEDriver(_Driver):

    def __init__(self, cfg):
        super().__init__(cfg)
        U = hybrid_state(cfg, self.grid)(self.grid.Q, self.grid.P)
        self.P = density_from_wavefunction(self.grid, np.asarray(U, dtype=complex))
        s = cfg["solver"]
        rho = np.real(np.einsum("ii...->...", self.P))
        self.max_trace = float(rho.max())
        self.eq = NQCLE(self.grid, self.H, eps_rho=s["eps_rho"] * self.max_trace,
                        divergence=s["divergence"])
        self.dt = cfg["time"]["dt"]
        self.eq.check_cfl(self.P, self.dt, s["cfl"], s["cfl_action"])

    def advance(self, t, nsteps):
        for _ in range(nsteps):
            self.P = self.eq.step(self.P, self.dt)
        s = self.cfg["solver"]
        self.eq.check_cfl(self.P, self.dt, s["cfl"], s["cfl_action"])

    def _energy(self):
        Hv = self.H.arrays(self.grid)[0]
        return float(np.real(self.grid.integrate(np.einsum("ij...,ji...->...", Hv, self.P))))

    def energy_scale(self):
        Hv = self.H.arrays(self.grid)[0]
        w = sum(np.abs(self.P[j, j]) * np.abs(Hv[j, j]) for j in range(self.H.n))
        return float(self.grid.integrate(w))

    def observe(self, t):
        g = self.grid
        M = integrated_density(g, self.P)
        mass = float(np.trace(M).real)
        rho_q = quantum_density_from_matrix(M)
        self._check_psd(rho_q, t)
        b = bloch_and_purity(rho_q)
        rho_c = np.real(np.einsum("ii...->...", self.P))
        bm = float(boundary_mass(g, np.sqrt(np.abs(rho_c)), self.cfg["checks"]["margin_fraction"]))
        self._check_boundary(bm, t)
        lam = node_min_eigenvalue(self.P)
        self._track("min_node_eigenvalue", lam)
        self._track("min_node_eigenvalue_rel", lam / self.max_trace)
        self._track("min_rho_c", rho_c.min())
        self._track("max_mass_defect", abs(mass - 1.0), "max")
        row = _row(t, b.n_vec, b.purity, self._energy(), mass, rho_c.min(), bm)
        return row, {"P": self.P, "rho_c": rho_c}


def quantum_density_from_matrix(M):
    tr = float(np.trace(M).real)
    return QuantumDensityMatrix(M / tr if tr > 0 else M, tr)


class _EhrenfestDriver(_Driver):

    def __init__(self, cfg):
        super().__init__(cfg)
        ini = cfg["initial"]
        self.s = EhrenfestState(ini["q0"], ini["p0"], unit_spinor(cfg))
        self.dt = cfg["time"]["dt"]
        self.trajectory = []

    def advance(self, t, nsteps):
        for _ in range(nsteps):
            self.s = ehrenfest_step(self.s, self.H, self.dt, self.grid.hbar)

    def energy_scale(self):
        Hm, _, _ = self.H.at(self.s.q, self.s.p)
        return float(np.sum(np.abs(np.diag(Hm))))

    def observe(self, t):
        psi = self.s.psi
        nrm = float(np.vdot(psi, psi).real)
        rho = np.outer(psi, psi.conj()) / nrm
        b = bloch_and_purity(rho)
        self.trajectory.append((t, self.s.q, self.s.p))
        return _row(t, b.n_vec, b.purity, ehrenfest_energy(self.s, self.H), nrm), {}


class _QuantumDriver(_Driver):

    def __init__(self, cfg):
        super().__init__(cfg)
        ini, s = cfg["initial"], cfg["solver"]
        hbar = self.grid.hbar
        osc = coherent_amplitudes(s["n_osc"], ini["q0"], ini["p0"], hbar)
        self.c0 = CompositeQuantumState.product(osc, unit_spinor(cfg), hbar)
        self.Hmat = build_composite_hamiltonian(self.H, s["n_osc"], hbar)
        self.prop = QuantumPropagator(self.Hmat, hbar, s["tail_tol"])
        self.c = self.c0

    def advance(self, t, nsteps):
        self.c = self.prop.evolve(self.c0, t)

    def energy_scale(self):
        v = self.c.c.reshape(-1)
        return float(np.sum(np.abs(v) ** 2 * np.abs(np.diag(self.Hmat))))

    def observe(self, t):
        rho = spin_reduced_density(self.c)
        rho = quantum_density_from_matrix(rho.matrix)
        self._check_psd(rho, t)
        b = bloch_and_purity(rho)
        v = self.c.c.reshape(-1)
        energy = float(np.vdot(v, self.Hmat @ v).real)
        rho_osc = oscillator_reduced_density(self.c)
        W = wigner_transform(rho_osc, self.grid, self.cfg["checks"]["wigner_tail_tol"]).W
        self._track("min_wigner", W.min())
        self._track("norm_defect", abs(self.c.norm2() - 1.0), "max")
        bm = boundary_mass(self.grid, np.sqrt(np.abs(W)), self.cfg["checks"]["margin_fraction"])
        row = _row(t, b.n_vec, b.purity, energy, self.c.norm2(), W.min(), bm)
        return row, {"rho_c": W, "rho_osc": rho_osc}


DRIVERS = {"kvn": _KoopmanDriver, "kvh": _KoopmanDriver, "qcwe": _QCWEDriver,
           "nqcle": _NQCLEDriver, "ehrenfest": _EhrenfestDriver, "quantum_ref": _QuantumDriver}


# -- run orchestration ------------------------------------------------------

@dataclass
class RunResult:
    directory: Path
    manifest: dict
    rows: list
    fields: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)


def default_run_name(cfg):
    e = cfg["experiment"]
    name = e["name"] or e["preset"] or cfg.model
    if cfg["solver"]["method"] == "exact" and not e["name"]:
        name += "_exact"
    return name


def resolve_output_dir(cfg, output_dir=None):
    out = Path(output_dir or cfg["experiment"]["output_dir"] or Path("runs") / default_run_name(cfg))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def write_timeseries(path, rows, source):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) for c in COLUMNS[:-1]] + [source])


def read_timeseries(path):
    with open(path, newline="") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (v if k == "source" else float(v)) for k, v in rec.items()})
    return rows


def _summarise(rows, scale, stats, cfg):
    """Drift checks recorded in the manifest (informational, never abort)."""
    chk = cfg["checks"]
    out = {}
    norms = np.array([r["total_norm"] for r in rows])
    if np.all(np.isfinite(norms)):
        d = float(np.max(np.abs(norms - norms[0])))
        out["norm_drift"] = {"value": d, "tol": chk["norm_tol"], "pass": d <= chk["norm_tol"]}
    energies = np.array([r["energy"] for r in rows])
    if np.all(np.isfinite(energies)) and np.isfinite(scale):
        ref = max(abs(energies[0]), scale)
        d = float(np.max(np.abs(energies - energies[0])) / ref) if ref > 0 else 0.0
        out["energy_drift"] = {"value": d, "scale": ref, "tol": chk["energy_tol"],
                               "pass": d <= chk["energy_tol"]}
    if "max_mass_defect" in stats:
        d = stats["max_mass_defect"]
        out["density_mass"] = {"value": d, "tol": chk["mass_tol"], "pass": d <= chk["mass_tol"]}
    if "min_rho_eigenvalue" in stats:
        v = stats["min_rho_eigenvalue"]
        out["psd"] = {"value": v, "tol": chk["psd_tol"], "pass": v >= -chk["psd_tol"]}
    return out


def _atomic_json(path, obj):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def run_experiment(cfg, output_dir=None, keep_fields=False, render=False):
    """Run ``cfg`` to completion and write its artifacts.

    Invariant aborts write ``error.json`` (and a manifest with
    ``status = "aborted"``) before the exception propagates.
    """
    out = resolve_output_dir(cfg, output_dir)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    source = SOURCE_TAG.get(cfg.model, cfg.model)
    manifest = {
        "status": "running",
        "model": cfg.model,
        "source": source,
        "config": cfg.to_dict(),
        "config_text": emit_config(cfg),
        "versions": {"kvhsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "checkpoints": [],
    }
    g = cfg["grid"]
    manifest["grid"] = {k: g[k] for k in ("nq", "np", "q_min", "q_max", "p_min", "p_max", "hbar")}
    rows, kept = [], []
    t0 = time.perf_counter()
    driver = None
    try:
        driver = DRIVERS[cfg.model](cfg)
        scale = driver.energy_scale()
        nsteps = cfg.steps_per_checkpoint
        dt_ckpt = cfg["time"]["checkpoint_interval"]
        for k in range(cfg.n_checkpoints):
            t = k * dt_ckpt
            if k:
                driver.advance(t, nsteps)
            row, fields = driver.observe(t)
            rows.append(row)
            files = {}
            for name, arr in fields.items():
                if name == "rho_osc":
                    fn = snap_dir / f"{name}_{k:03d}.npy"
                    np.save(fn, arr)
                else:
                    fn = snap_dir / f"{name}_{k:03d}.bin"
                    write_snapshot(fn, np.asarray(arr, dtype=complex))
                files[name] = str(fn.relative_to(out))
            manifest["checkpoints"].append({"index": k, "t": t, "files": files})
            if keep_fields:
                kept.append({n: np.array(a, copy=True) for n, a in fields.items()})
            log.info("%s t=%g norm=%.12g", cfg.model, t, row["total_norm"])
    except InvariantViolation as exc:
        manifest["status"] = "aborted"
        manifest["error"] = exc.record()
        manifest["wall_time"] = time.perf_counter() - t0
        write_timeseries(out / "timeseries.csv", rows, source)
        _atomic_json(out / "error.json", exc.record())
        _atomic_json(out / "manifest.json", manifest)
        raise
    manifest["wall_time"] = time.perf_counter() - t0
    manifest["energy_scale"] = scale
    manifest["stats"] = driver.stats
    manifest["checks"] = _summarise(rows, scale, driver.stats, cfg)
    manifest["status"] = "ok"
    write_timeseries(out / "timeseries.csv", rows, source)
    if isinstance(driver, _EhrenfestDriver):
        with open(out / "trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "q", "p"])
            w.writerows([[repr(float(x)) for x in rec] for rec in driver.trajectory])
    _atomic_json(out / "manifest.json", manifest)
    if render:
        from .plotting import plot_run
        manifest["figures"] = plot_run(out, rows, cfg.model, manifest)
        _atomic_json(out / "manifest.json", manifest)
    return RunResult(out, manifest, rows, kept)


def oracle_config(cfg):
    """The same experiment routed through its exact/reference solver."""
    if cfg.model in ("ehrenfest", "quantum_ref"):
        return cfg
    return cfg.replace(solver={"method": "exact"})
