"""Report figures rendered next to the delimited outputs.

Every helper takes an output path and writes a PNG with the Agg backend, so
the CLI works headless.  Figures are a convenience view of the CSV/JSON data
products, never the only record of a result.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .states import DensityMatrix

_DPI = 150


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def save_jsi(path, grid: np.ndarray, title: str = "") -> None:
    """Heatmap of a d x d coincidence grid (signal rows, idler columns)."""
    grid = np.asarray(grid)
    d = grid.shape[0]
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(grid, origin="lower", cmap="viridis",
                   extent=(0.5, d + 0.5, 0.5, d + 0.5))
    ax.set_xlabel("idler bin")
    ax.set_ylabel("signal bin")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="coincidences")
    _save(fig, path)


def save_density(path, rho: DensityMatrix, title: str = "") -> None:
    """Magnitude and phase heatmaps of a density matrix."""
    mat = rho.elements
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.4, 3.6))
    im0 = ax0.imshow(np.abs(mat), origin="upper", cmap="viridis")
    ax0.set_title("|rho|")
    fig.colorbar(im0, ax=ax0, fraction=0.046)
    phase = np.angle(mat)
    phase[np.abs(mat) < 1e-6] = 0.0  # suppress noise phases of near-zero elements
    im1 = ax1.imshow(phase, origin="upper", cmap="twilight", vmin=-np.pi, vmax=np.pi)
    ax1.set_title("arg(rho)")
    fig.colorbar(im1, ax=ax1, fraction=0.046)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def save_sequential(path, schedule) -> None:
    """Convergence diagnostic: fidelity between consecutive estimates vs thinning."""
    ns = [rec.n for rec in schedule if not np.isnan(rec.fidelity_to_previous)]
    fs = [rec.fidelity_to_previous for rec in schedule if not np.isnan(rec.fidelity_to_previous)]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(ns, fs, "o-")
    ax.axhline(0.99, color="gray", ls="--", lw=1)
    ax.set_xlabel("thinning level n (T = 2^n)")
    ax.set_ylabel("sequential fidelity")
    ax.set_ylim(min(fs + [0.9]), 1.001)
    _save(fig, path)


def save_fidelity_vs_r(path, rows) -> None:
    """Fidelity (with error bars) as a function of settings used."""
    rows = list(rows)
    r = [row[0] for row in rows]
    f = [row[1] for row in rows]
    df = [row[2] for row in rows]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.errorbar(r, f, yerr=df, fmt="o-", capsize=3)
    ax.set_xlabel("settings used R")
    ax.set_ylabel("fidelity")
    ax.set_ylim(0, 1.02)
    _save(fig, path)


def save_design_histograms(path, histograms) -> None:
    """Overlaid singular-value histograms for several delta_max values."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for hist in histograms:
        centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
        ax.step(centers, hist.counts, where="mid",
                label=f"delta_max = {hist.study.delta_max:g}")
    ax.set_xlabel("log10 singular value")
    ax.set_ylabel("count")
    ax.legend()
    _save(fig, path)


def save_theory_table(path, rows) -> None:
    """Fidelity and log-negativity of the noise model versus dimension."""
    rows = list(rows)
    d = [row["d"] for row in rows]
    f = [row["F"] for row in rows]
    e = [row["E"] for row in rows]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(d, f, "o-", label="fidelity")
    ax.plot(d, e, "s-", label="log-negativity (ebits)")
    ax.set_xlabel("qudit dimension d")
    ax.legend()
    _save(fig, path)


def save_calibration(path, x, y, x_model, y_model, xlabel: str) -> None:
    """Sweep data points with the fitted model curve."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(x, y, "o", ms=4, label="data")
    ax.plot(x_model, y_model, "-", label="fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("coincidences")
    ax.legend()
    _save(fig, path)
