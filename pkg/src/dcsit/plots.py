"""Figure rendering for the CLI report paths.

Each function takes the rows already written to CSV/JSON and saves a PNG next
to them. Headless by construction (Agg backend), so these are safe to call
from scripts and CI.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def discrete_sweep(rows: list[dict], path: str) -> None:
    """Capacity vs eps2, one curve per eps1 value."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    eps1_vals = sorted({r["eps1"] for r in rows})
    for e1 in eps1_vals:
        pts = [(r["eps2"], r["capacity_bits"]) for r in rows if r["eps1"] == e1]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, label=f"eps1 = {e1:g}")
    ax.set_xlabel("eps2")
    ax.set_ylabel("capacity (bits)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mimo_curves(rows: list[dict], path: str) -> None:
    """Common-message capacity vs SNR for the three CSIT assumptions."""
    snr = [r["snr_db"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(snr, [r["c_perfect"] for r in rows], "k--", label="perfect CSIT")
    ax.plot(snr, [r["c_distributed"] for r in rows], "b-o", markersize=3,
            label="distributed CSIT")
    ax.plot(snr, [r["c_nocsit"] for r in rows], "r:", label="no CSIT")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("common message capacity (bits)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def region_boundary(rows: list[dict], path: str) -> None:
    """Private-rate trace (R1, R2) with the common rate R0 as color."""
    r0 = np.array([r["R0_bits"] for r in rows])
    r1 = np.array([r["R1_bits"] for r in rows])
    r2 = np.array([r["R2_bits"] for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    ax.plot(r1, r2, color="0.7", lw=1.0, zorder=1)
    sc = ax.scatter(r1, r2, c=r0, cmap="viridis", s=18, zorder=2)
    fig.colorbar(sc, ax=ax, label="R0 (bits)")
    ax.set_xlabel("R1 (bits)")
    ax.set_ylabel("R2 (bits)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
