"""File-only matplotlib renderings of structures, traces, and sweeps.

Every renderer writes a PNG with fixed figure geometry and a pinned
metadata block, so repeated runs over identical inputs produce
byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")  # render to files, never to a display server

import matplotlib.pyplot as plt
import numpy as np

from .constants import CELSIUS_OFFSET

_DPI = 150
_METADATA = {"Software": "dbspin"}

_SPECIES_STYLE = {
    # color, marker size
    "C": ("#4a4a4a", 26.0),
    "O": ("#d62728", 34.0),
    "H": ("#9ecae1", 12.0),
}


def _save(fig, path):
    fig.savefig(path, dpi=_DPI, metadata=_METADATA)
    plt.close(fig)


def render_structure(structure, path) -> None:
    """Top view of the slab: atoms colored by species, shaded by depth."""
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    pos = structure.positions
    z = pos[:, 2]
    z_span = float(z.max() - z.min()) or 1.0
    for sp, (color, size) in _SPECIES_STYLE.items():
        mask = np.array([s == sp for s in structure.species])
        if not mask.any():
            continue
        depth = (z[mask] - z.min()) / z_span  # 0 bottom .. 1 top
        ax.scatter(
            pos[mask, 0],
            pos[mask, 1],
            s=size,
            c=color,
            edgecolors="none",
            zorder=2,
            label=sp,
            linewidths=0,
        )
        # overlay brightness by depth: deeper atoms fade toward white
        ax.scatter(
            pos[mask, 0],
            pos[mask, 1],
            s=size,
            c="white",
            alpha=(1.0 - depth) * 0.75,
            edgecolors="none",
            zorder=3,
            linewidths=0,
        )
    a, b = structure.cell.vectors[0], structure.cell.vectors[1]
    corners = np.array([[0, 0], a[:2], (a + b)[:2], b[:2], [0, 0]])
    ax.plot(corners[:, 0], corners[:, 1], color="#888888", lw=0.8, zorder=1)
    ax.set_aspect("equal")
    ax.set_xlabel("x (A)")
    ax.set_ylabel("y (A)")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def render_echo(trace, path) -> None:
    """Two-pulse echo envelope E(tau)."""
    taus = [t for t, _ in trace]
    amps = [e for _, e in trace]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(taus, amps, lw=1.0, color="#1f77b4")
    ax.set_xlabel("tau (us)")
    ax.set_ylabel("echo amplitude")
    ax.set_ylim(min(0.0, min(amps)) - 0.05, 1.05)
    ax.grid(True, lw=0.3, alpha=0.5)
    _save(fig, path)


def render_sweep(families, path) -> None:
    """Rate vs temperature for each barrier, log rate axis."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for barrier, rows in families:
        temps = [t_k for t_k, _ in rows]
        rates = [r for _, r in rows]
        ax.semilogy(temps, rates, lw=1.2, label=f"{barrier:g} eV")
    ax.set_xlabel("T (K)")
    ax.set_ylabel("rate (1/s)")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(True, which="both", lw=0.3, alpha=0.5)
    _save(fig, path)


def render_trajectory(trajectory, path, temp_kelvin=None) -> None:
    """Coverage versus time during an isothermal hold."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(trajectory.times, trajectory.thetas, lw=1.2, color="#2ca02c")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("coverage")
    ax.set_ylim(-0.02, 1.02)
    if temp_kelvin is not None:
        ax.set_title(f"{temp_kelvin:g} K ({temp_kelvin - CELSIUS_OFFSET:g} C)", fontsize=9)
    ax.grid(True, lw=0.3, alpha=0.5)
    _save(fig, path)
