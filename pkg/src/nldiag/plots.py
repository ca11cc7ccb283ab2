"""Figure rendering for the report files.

Each renderer takes the in-memory results and writes PNG files next to the
delimited output.  The figures mirror the diagnostic plots the toolkit is
built around: node trajectories, eigenvalue magnitude versus time, sweep
grids as pseudo-color maps, and spectra in the complex plane.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .homotopy import RunReport
from .sweeps import ParameterSweepResult, StepSizeSweepResult

__all__ = [
    "plot_run",
    "plot_parameter_sweep",
    "plot_stepsize_sweep",
    "plot_spectrum",
]


def plot_run(out_dir, report: RunReport) -> List[str]:
    out = Path(out_dir)
    names = report.circuit.unknown_ordering
    ts = np.array([rec.t for rec in report.steps]) * 1e3
    xs = np.array([rec.x for rec in report.steps])

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    n_nodes = len(report.circuit.node_names)
    for j in range(n_nodes):
        ax.plot(ts, xs[:, j], lw=0.8, label=names[j])
    ax.set_xlabel("t [ms]")
    ax.set_ylabel("node voltage [V]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "voltages.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    colors = {"probe": "tab:blue", "dmd": "tab:red"}
    for method in sorted(report.config.diag_mode):
        pts_t, pts_m = [], []
        for rec in report.steps:
            rep = rec.eigen.get(method)
            if rep is None or not rep.usable:
                continue
            for lam in rep.eigenvalues:
                pts_t.append(rec.t * 1e3)
                pts_m.append(abs(lam))
        if pts_t:
            ax.plot(pts_t, pts_m, ".", ms=1.5, color=colors.get(method),
                    label=method, alpha=0.6)
    ax.axhline(1.0, color="gray", lw=0.6, ls="--")
    ax.set_xlabel("t [ms]")
    ax.set_ylabel("|lambda|")
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "eigenvalues.png", dpi=150)
    plt.close(fig)
    return ["voltages.png", "eigenvalues.png"]


def _grid_figure(out_path, ts, values, grid, ylabel):
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    masked = np.ma.masked_invalid(grid)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("white")
    mesh = ax.pcolormesh(np.asarray(ts) * 1e3, values, masked, cmap=cmap,
                         shading="nearest")
    ax.set_yscale("log")
    ax.set_xlabel("t [ms]")
    ax.set_ylabel(ylabel)
    fig.colorbar(mesh, ax=ax, label="leading |lambda| (white = failed)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_parameter_sweep(out_dir, result: ParameterSweepResult) -> List[str]:
    out = Path(out_dir)
    values = [e.value for e in result.entries]
    n_t = max(len(e.ts) for e in result.entries)
    grid = np.full((len(values), n_t), np.nan)
    ts = result.entries[0].ts if result.entries else np.array([])
    for i, entry in enumerate(result.entries):
        grid[i, : len(entry.leading_abs)] = entry.leading_abs
    _grid_figure(out / "grid.png", ts, values, grid, "parallel resistance [ohm]")
    return ["grid.png"]


def plot_stepsize_sweep(out_dir, result: StepSizeSweepResult) -> List[str]:
    out = Path(out_dir)
    written = []
    ts = sorted({c.t for c in result.cells})
    t_index = {t: i for i, t in enumerate(ts)}
    dt_index = {d: i for i, d in enumerate(result.candidate_dts)}
    for order in result.orders:
        grid = np.full((len(result.candidate_dts), len(ts)), np.nan)
        for cell in result.cells:
            if cell.order != order:
                continue
            lead = np.nan if cell.leading_abs is None else cell.leading_abs
            grid[dt_index[cell.dt], t_index[cell.t]] = lead
        name = f"grid_order{order}.png"
        _grid_figure(out / name, np.asarray(ts), list(result.candidate_dts),
                     grid, "candidate dt [s]")
        written.append(name)
    return written


def plot_spectrum(out_dir, map_eigs: np.ndarray,
                  hessian_eigs: Optional[np.ndarray]) -> List[str]:
    out = Path(out_dir)
    written = []
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(map_eigs.real, map_eigs.imag, "o", ms=3)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.axvline(0.0, color="gray", lw=0.5)
    ax.set_xlabel("Re(lambda)")
    ax.set_ylabel("Im(lambda)")
    fig.tight_layout()
    fig.savefig(out / "spectrum.png", dpi=150)
    plt.close(fig)
    written.append("spectrum.png")
    if hessian_eigs is not None:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot(hessian_eigs.real, hessian_eigs.imag, "o", ms=3)
        ax.set_xlabel("Re(lambda)")
        ax.set_ylabel("Im(lambda)")
        fig.tight_layout()
        fig.savefig(out / "hessian_spectrum.png", dpi=150)
        plt.close(fig)
        written.append("hessian_spectrum.png")
    return written
