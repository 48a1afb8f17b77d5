"""Experiment configuration: INI text with flat sections.

Schema (every key optional, defaults below)::

    [experiment]  model, preset, name, output_dir, seed
    [grid]        nq, np, q_min, q_max, p_min, p_max, hbar, scheme
    [hamiltonian] h0, hi, sigma, hx, hy, hz
    [initial]     state, q0, p0, width, alpha, kq, kp,
                  window_inner, window_outer, stretch, spinor
    [time]        dt, t_final, checkpoint_interval
    [solver]      method, cfl, cfl_action, eps_rho, divergence, n_osc, tail_tol
    [checks]      boundary_mass_tol, margin_fraction, psd_tol, norm_tol,
                  energy_tol, mass_tol, wigner_tail_tol

Quadratic phase-space functions are written as named coefficients of
``a q^2 + b p^2 + c qp + d q + e p + f``, e.g. ``h0 = a=0.5, b=0.5``. The
2-level Hamiltonian is ``h0 * 1 + hi * sigma`` when ``hi`` is given and
``h0 * 1 + hx sx + hy sy + hz sz`` otherwise. ``preset`` names a shipped
configuration that the remaining keys override.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .grid import make_grid
from .hamiltonian import PAULI, HamiltonianFunction, HybridHamiltonian

MODELS = ("kvn", "kvh", "qcwe", "nqcle", "ehrenfest", "quantum_ref")
COEFF_NAMES = "abcdef"


class _Coeffs:
    """Marker type for quadratic coefficient strings."""


class _Spinor:
    """Marker type for comma-separated complex vectors."""


def _choice(*options):
    return tuple(options)


SCHEMA = {
    "experiment": {
        "model": (_choice(*MODELS), "qcwe"),
        "preset": (str, ""),
        "name": (str, ""),
        "output_dir": (str, ""),
        "seed": (int, 0),
    },
    "grid": {
        "nq": (int, 128),
        "np": (int, 128),
        "q_min": (float, -16.0),
        "q_max": (float, 16.0),
        "p_min": (float, -16.0),
        "p_max": (float, 16.0),
        "hbar": (float, 1.0),
        "scheme": (_choice("spectral", "central4"), "spectral"),
    },
    "hamiltonian": {
        "h0": (_Coeffs, (0.5, 0.5, 0.0, 0.0, 0.0, 0.0)),
        "hi": (_Coeffs, None),
        "sigma": (_choice("x", "y", "z"), "z"),
        "hx": (_Coeffs, None),
        "hy": (_Coeffs, None),
        "hz": (_Coeffs, None),
    },
    "initial": {
        "state": (_choice("matched", "gaussian"), "matched"),
        "q0": (float, 0.0),
        "p0": (float, 0.0),
        "width": (float, 1.0),
        "alpha": (float, 0.0),
        "kq": (float, 0.0),
        "kp": (float, 0.0),
        "window_inner": (float, 0.5),
        "window_outer": (float, 0.9),
        "stretch": (float, math.sqrt(3.0)),
        "spinor": (_Spinor, (1 + 0j, 1 + 0j)),
    },
    "time": {
        "dt": (float, 1e-3),
        "t_final": (float, 10.0),
        "checkpoint_interval": (float, 1.0),
    },
    "solver": {
        "method": (_choice("rk4", "exact"), "rk4"),
        "cfl": (float, 0.5),
        "cfl_action": (_choice("abort", "warn"), "abort"),
        "eps_rho": (float, 1e-12),
        "divergence": (_choice("spectral", "upwind"), "spectral"),
        "n_osc": (int, 32),
        "tail_tol": (float, 1e-8),
    },
    "checks": {
        "boundary_mass_tol": (float, 1e-6),
        "margin_fraction": (float, 0.05),
        "psd_tol": (float, 1e-10),
        "norm_tol": (float, 1e-8),
        "energy_tol": (float, 1e-6),
        "mass_tol": (float, 1e-6),
        "wigner_tail_tol": (float, 1e-6),
    },
}

_FIG1 = {
    "experiment": {"model": "qcwe"},
    "hamiltonian": {"h0": "a=0.5, b=0.5", "hi": "a=0.25, b=-0.25, f=0.5", "sigma": "z"},
    "initial": {"state": "matched", "spinor": "1, 1"},
    "time": {"dt": "1e-3", "t_final": "10", "checkpoint_interval": "1"},
}

PRESETS = {
    "figure1": _FIG1,
    "figure1_quantum": {**_FIG1, "experiment": {"model": "quantum_ref"},
                        "solver": {"n_osc": "32"}},
    "figure1_ehrenfest": {**_FIG1, "experiment": {"model": "ehrenfest"},
                          "initial": {"q0": "1", "spinor": "1, 1"}},
    "nqcle_figure1": {**_FIG1, "experiment": {"model": "nqcle"},
                      "time": {"dt": "1e-3", "t_final": "2", "checkpoint_interval": "0.25"},
                      "solver": {"eps_rho": "1e-6"}},
    # sigma_x coupling 2q on top of the figure1 Hamiltonian: Sigma no longer
    # commutes with the flow and the classical density turns negative
    "sign_indefinite": {
        "experiment": {"model": "qcwe"},
        "hamiltonian": {"h0": "a=0.5, b=0.5", "hz": "a=0.25, b=-0.25, f=0.5", "hx": "d=2"},
        "initial": {"state": "matched", "spinor": "1, 1"},
        "time": {"dt": "1e-3", "t_final": "1.2", "checkpoint_interval": "0.2"},
    },
    "kvh_oscillator": {
        "experiment": {"model": "kvh"},
        "hamiltonian": {"h0": "a=0.5, b=0.5"},
        "initial": {"state": "gaussian", "q0": "2"},
        "time": {"dt": "1e-3", "t_final": "10", "checkpoint_interval": "1"},
    },
    "kvn_oscillator": {
        "experiment": {"model": "kvn"},
        "hamiltonian": {"h0": "a=0.5, b=0.5"},
        "initial": {"state": "gaussian", "q0": "2"},
        "time": {"dt": "1e-3", "t_final": "10", "checkpoint_interval": "1"},
    },
    "free_particle": {
        "experiment": {"model": "kvh"},
        "hamiltonian": {"h0": "b=0.5"},
        "initial": {"state": "gaussian", "p0": "1"},
        "time": {"dt": "1e-3", "t_final": "2", "checkpoint_interval": "0.5"},
    },
}


# -- value parsing ----------------------------------------------------------

def parse_coeffs(text):
    """``"a=0.5, b=0.5"`` or six numbers to a coefficient tuple."""
    text = text.strip()
    if text.lower() in ("", "none"):
        return None
    parts = [s for s in text.replace(";", ",").split(",") if s.strip()]
    if all("=" not in s for s in parts):
        vals = [float(s) for s in parts]
        if len(vals) != 6:
            raise ValueError(f"expected 6 coefficients, got {len(vals)}")
        return tuple(vals)
    out = dict.fromkeys(COEFF_NAMES, 0.0)
    for s in parts:
        k, _, v = s.partition("=")
        k = k.strip()
        if k not in out:
            raise ValueError(f"unknown coefficient {k!r} (use a..f)")
        out[k] = float(v)
    return tuple(out[k] for k in COEFF_NAMES)


def format_coeffs(c):
    if c is None:
        return "none"
    items = [f"{k}={v!r}" for k, v in zip(COEFF_NAMES, c) if v != 0.0]
    return ", ".join(items) if items else "f=0.0"


def parse_spinor(text):
    vals = [complex(s.strip().replace(" ", "")) for s in text.split(",") if s.strip()]
    if not vals:
        raise ValueError("empty spinor")
    return tuple(vals)


def format_spinor(v):
    return ", ".join(repr(z.real) if z.imag == 0 else repr(z).strip("()") for z in v)


def _parse_value(kind, text):
    if kind is _Coeffs:
        return parse_coeffs(text)
    if kind is _Spinor:
        return parse_spinor(text)
    if isinstance(kind, tuple):
        v = text.strip()
        if v not in kind:
            raise ValueError(f"must be one of {', '.join(kind)}")
        return v
    if kind is int:
        f = float(text)
        if f != int(f):
            raise ValueError("expected an integer")
        return int(f)
    if kind is float:
        return float(text)
    return text.strip()


def _format_value(kind, value):
    if kind is _Coeffs:
        return format_coeffs(value)
    if kind is _Spinor:
        return format_spinor(value)
    if kind is float:
        return repr(float(value))
    return str(value)


# -- config object ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Validated configuration; ``values[section][key]`` holds typed values."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def model(self):
        return self.values["experiment"]["model"]

    def to_dict(self):
        out = {}
        for sec, keys in SCHEMA.items():
            out[sec] = {k: _jsonable(self.values[sec][k]) for k in keys}
        return out

    def replace(self, **sections):
        """Copy with ``section={key: typed value}`` overrides, re-validated."""
        vals = {s: dict(v) for s, v in self.values.items()}
        for sec, upd in sections.items():
            vals[sec].update(upd)
        validate(vals)
        return ExperimentConfig(vals)

    # derived objects

    def grid(self):
        g = self.values["grid"]
        return make_grid(g["nq"], g["np"], ((g["q_min"], g["q_max"]), (g["p_min"], g["p_max"])),
                         hbar=g["hbar"], scheme=g["scheme"])

    def hamiltonian(self):
        return build_hamiltonian(self.values["hamiltonian"], self.model)

    @property
    def n_checkpoints(self):
        t = self.values["time"]
        return int(round(t["t_final"] / t["checkpoint_interval"])) + 1

    @property
    def steps_per_checkpoint(self):
        t = self.values["time"]
        return int(round(t["checkpoint_interval"] / t["dt"]))


def _jsonable(v):
    if isinstance(v, tuple):
        return [[z.real, z.imag] if isinstance(z, complex) else z for z in v]
    return v


def _quad(c):
    return HamiltonianFunction.quadratic(*c)


def build_hamiltonian(h, model):
    """Scalar Hamiltonian for kvn/kvh, 2x2 hybrid Hamiltonian otherwise."""
    H0 = _quad(h["h0"])
    if model in ("kvn", "kvh"):
        return H0
    if h["hi"] is not None:
        return HybridHamiltonian.from_commuting(H0, _quad(h["hi"]), PAULI[h["sigma"]])
    if all(h[k] is None for k in ("hx", "hy", "hz")):
        return HybridHamiltonian.from_commuting(H0, HamiltonianFunction.constant(0.0), PAULI["z"])
    return HybridHamiltonian.pauli(H0, *(None if h[k] is None else _quad(h[k])
                                         for k in ("hx", "hy", "hz")))


def _is_multiple(x, step, rtol=1e-9):
    r = x / step
    return abs(r - round(r)) <= rtol * max(1.0, abs(r)) and round(r) >= 1


def validate(vals):
    """Collect every violation in ``vals``; raise :class:`ConfigError` if any."""
    errs = []
    g, t, s, h, ini, e, c = (vals[k] for k in ("grid", "time", "solver", "hamiltonian",
                                                 "initial", "experiment", "checks"))
    for k in ("nq", "np"):
        if g[k] < 8 or g[k] % 2:
            errs.append(f"grid.{k}: must be even and >= 8, got {g[k]}")
    for lo, hi in (("q_min", "q_max"), ("p_min", "p_max")):
        if not g[lo] < g[hi]:
            errs.append(f"grid.{lo}/{hi}: need {lo} < {hi}")
    if g["hbar"] <= 0:
        errs.append("grid.hbar: must be positive")
    if t["t_final"] <= 0:
        errs.append(f"time.t_final: NegativeDuration, t_final must be > 0 (got {t['t_final']:g})")
    if t["dt"] <= 0:
        errs.append(f"time.dt: must be > 0 (got {t['dt']:g})")
    if t["checkpoint_interval"] <= 0:
        errs.append("time.checkpoint_interval: must be > 0")
    elif t["dt"] > 0 and t["t_final"] > 0:
        if not _is_multiple(t["checkpoint_interval"], t["dt"]):
            errs.append("time.checkpoint_interval: must be a whole number of steps dt")
        if not _is_multiple(t["t_final"], t["checkpoint_interval"]):
            errs.append("time.t_final: must be a whole number of checkpoint intervals")
    for k in ("cfl", "eps_rho", "tail_tol"):
        if s[k] <= 0:
            errs.append(f"solver.{k}: must be positive")
    if s["n_osc"] < 8:
        errs.append("solver.n_osc: must be >= 8")
    for k, v in c.items():
        if v <= 0:
            errs.append(f"checks.{k}: must be positive")
    if not 0 < ini["window_inner"] < 1 or not 0 < ini["window_outer"] <= 1:
        errs.append("initial.window_inner/window_outer: fractions must lie in (0, 1]")
    if ini["width"] <= 0:
        errs.append("initial.width: must be positive")

    model = e["model"]
    coupled = [k for k in ("hi", "hx", "hy", "hz") if h[k] is not None]
    if model in ("kvn", "kvh"):
        if coupled:
            errs.append(f"hamiltonian.{coupled[0]}: model {model} takes a scalar h0 only")
    else:
        if len(ini["spinor"]) != 2:
            errs.append("initial.spinor: 2-level models need two components")
        elif not any(ini["spinor"]):
            errs.append("initial.spinor: must be nonzero")
        if h["hi"] is not None and any(h[k] is not None for k in ("hx", "hy", "hz")):
            errs.append("hamiltonian.hi: give either hi/sigma or hx/hy/hz, not both")
    if s["method"] == "exact":
        if model in ("nqcle", "ehrenfest"):
            errs.append(f"solver.method: no exact solver for model {model}")
        if model == "qcwe" and any(h[k] is not None for k in ("hx", "hy", "hz")):
            errs.append("solver.method: exact qcwe needs the commuting h0 + hi*sigma form")
    if s["divergence"] == "upwind" and model != "nqcle":
        errs.append("solver.divergence: only used by model nqcle")
    if errs:
        raise ConfigError(errs)


def _merge_text(raw, section, mapping, errs, origin):
    if section not in SCHEMA:
        errs.append(f"{origin}: unknown section [{section}]")
        return
    for key, text in mapping.items():
        if key not in SCHEMA[section]:
            errs.append(f"{section}.{key}: unknown key")
            continue
        raw[section][key] = text


def parse_config(text):
    """Parse and validate INI text; all problems are reported together."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    errs = []
    raw = {sec: {} for sec in SCHEMA}
    preset = cp.get("experiment", "preset", fallback="").strip()
    if preset:
        if preset not in PRESETS:
            errs.append(f"experiment.preset: unknown preset {preset!r} "
                        f"(have {', '.join(sorted(PRESETS))})")
        else:
            for sec, mapping in PRESETS[preset].items():
                _merge_text(raw, sec, mapping, errs, f"preset {preset}")
    for sec in cp.sections():
        _merge_text(raw, sec, dict(cp[sec]), errs, "config")

    vals = {}
    for sec, keys in SCHEMA.items():
        vals[sec] = {}
        for key, (kind, default) in keys.items():
            if key in raw[sec]:
                try:
                    vals[sec][key] = _parse_value(kind, raw[sec][key])
                except ValueError as exc:
                    errs.append(f"{sec}.{key}: {exc}")
                    vals[sec][key] = default
            else:
                vals[sec][key] = default
    try:
        validate(vals)
    except ConfigError as exc:
        errs += exc.violations
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(vals)


def emit_config(cfg):
    """INI text that parses back to ``cfg``.

    Every key is written explicitly, so re-applying the preset is harmless.
    """
    cp = configparser.ConfigParser(interpolation=None)
    for sec, keys in SCHEMA.items():
        cp[sec] = {}
        for key, (kind, _) in keys.items():
            cp[sec][key] = _format_value(kind, cfg.values[sec][key])
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def preset_config(name, **overrides):
    """Shipped preset as a config, with optional ``section={key: text}`` overrides."""
    lines = [f"[experiment]\npreset = {name}"]
    extra = overrides.pop("experiment", {})
    lines += [f"{k} = {v}" for k, v in extra.items()]
    for sec, mapping in overrides.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in mapping.items()]
    return parse_config("\n".join(lines))


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
