"""Report figures, rendered straight to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from vortexwave.kernels import al_modulus


def plot_simulation(series: dict, path: str | Path) -> Path:
    """Radii, norms and margin panels of one simulate run."""
    t = series["time"]
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.6))
    ax = axes[0]
    ax.plot(t, series["support_radius"], label="support")
    for key in series:
        if key.startswith("constancy_"):
            ax.plot(t, series[key], label=key.replace("_", " "))
    ax.set_xlabel("t")
    ax.set_ylabel("radius")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    ax = axes[1]
    for key, label in [("lp1", "L1"), ("lp2", "L2"), ("lp_inf", "Linf")]:
        ref = series[key][0]
        if ref > 0:
            ax.plot(t, series[key] / ref, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("norm / initial")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    ax = axes[2]
    plotted = False
    for key, label in [
        ("min_vortex_marker_dist", "vortex-marker"),
        ("min_vortex_pair_dist", "vortex-vortex"),
        ("hole_radius", "hole"),
    ]:
        if key in series:
            ax.semilogy(t, series[key], label=label)
            plotted = True
    if not plotted:
        ax.set_axis_off()
    else:
        ax.set_xlabel("t")
        ax.set_ylabel("distance")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_twin(series: dict, etas: Sequence[float], path: str | Path) -> Path:
    """Squared twin separation per perturbation size, log scale."""
    t = series["time"]
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for i, eta in enumerate(etas):
        ax.semilogy(t, np.maximum(series[f"r_{i}"], 1e-300), label=f"eta = {eta:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("r(t)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_convergence(h_levels: Sequence[float], residuals, path: str | Path) -> Path:
    """Weak-form residual magnitude per test function across refinement."""
    residuals = np.asarray(residuals)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for m in range(residuals.shape[1]):
        ax.loglog(h_levels, np.abs(residuals[:, m]), "o-", label=f"psi {m}")
    ax.invert_xaxis()
    ax.set_xlabel("h")
    ax.set_ylabel("|weak residual|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_kernels(path: str | Path) -> Path:
    """Continuity modulus against its power bounds."""
    z = np.linspace(1e-6, 1.0, 400)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.plot(z, al_modulus(z), "k", label="z (1 - ln z)")
    for p in (2.0, 4.0, 8.0):
        ax.plot(z, p * z ** (1.0 - 1.0 / p), "--", label=f"p t^(1-1/p), p = {p:g}")
    ax.set_xlabel("z")
    ax.set_ylabel("modulus")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
