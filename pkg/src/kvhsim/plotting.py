"""PNG figures for run and comparison directories (non-interactive backend)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .snapshot import read_snapshot  # noqa: E402


def _col(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


def _has(rows, name):
    return bool(rows) and np.all(np.isfinite(_col(rows, name)))


def _extent(grid_info):
    return (grid_info["q_min"], grid_info["q_max"], grid_info["p_min"], grid_info["p_max"])


def plot_timeseries(path, series, title=""):
    """Bloch components and purity (or norm and energy) against time.

    ``series`` maps a label to a list of CSV rows; the first entry is drawn
    solid, later ones dashed.
    """
    first = next(iter(series.values()))
    bloch = _has(first, "n_x")
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    for i, (label, rows) in enumerate(series.items()):
        ls = "-" if i == 0 else "--"
        t = _col(rows, "t")
        if bloch:
            for name, c in (("n_x", "C0"), ("n_y", "C1"), ("n_z", "C2")):
                axes[0].plot(t, _col(rows, name), ls, color=c, label=f"{name} {label}")
            axes[1].plot(t, _col(rows, "purity"), ls, color="k", label=label)
        else:
            axes[0].plot(t, _col(rows, "total_norm") - 1.0, ls, label=label)
            e = _col(rows, "energy")
            axes[1].plot(t, e - e[0], ls, label=label)
    if bloch:
        axes[0].set_ylabel("Bloch vector")
        axes[1].set_ylabel("purity")
    else:
        axes[0].set_ylabel("norm - 1")
        axes[1].set_ylabel("energy - energy(0)")
    for ax in axes:
        ax.set_xlabel("t")
        ax.legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return str(path)


def plot_densities(path, grid_info, fields, title=""):
    """Side-by-side images of real phase-space fields sharing one grid."""
    n = len(fields)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.8), squeeze=False)
    for ax, (label, f) in zip(axes[0], fields.items()):
        f = np.real(np.asarray(f))
        lim = float(np.max(np.abs(f))) or 1.0
        im = ax.imshow(f.T, origin="lower", extent=_extent(grid_info), cmap="RdBu_r",
                       vmin=-lim, vmax=lim, aspect="equal")
        ax.set_title(label, fontsize=9)
        ax.set_xlabel("q")
        ax.set_ylabel("p")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return str(path)


def plot_run(directory, rows, label, manifest=None):
    """Time series plus the final classical density, if one was written."""
    directory = Path(directory)
    figs = [plot_timeseries(directory / "timeseries.png", {label: rows}, label)]
    if manifest:
        last = manifest["checkpoints"][-1]["files"] if manifest["checkpoints"] else {}
        if "rho_c" in last:
            rho = read_snapshot(directory / last["rho_c"]).real
            t = manifest["checkpoints"][-1]["t"]
            figs.append(plot_densities(directory / "density_final.png", manifest["grid"],
                                       {f"rho_c, t = {t:g}": rho}, label))
    return figs


def plot_comparison(directory, rows_a, rows_b, labels, density=None, grid_info=None):
    directory = Path(directory)
    figs = [plot_timeseries(directory / "timeseries.png",
                            {labels[0]: rows_a, labels[1]: rows_b}, " vs ".join(labels))]
    if density is not None and grid_info is not None:
        t, ra, rb = density
        figs.append(plot_densities(directory / "density.png", grid_info,
                                   {labels[0]: ra, labels[1]: rb, "difference": ra - rb},
                                   f"t = {t:g}" if math.isfinite(t) else ""))
    return figs
