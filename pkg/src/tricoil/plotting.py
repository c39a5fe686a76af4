"""Figure rendering for the ``report`` command (matplotlib, Agg backend)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def energy_profiles(profiles: dict[str, np.ndarray]) -> bytes:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, rows in profiles.items():
        ax.plot(rows[:, 0], rows[:, 1], label=label)
    ax.set_xlabel("z on axis [m]")
    ax.set_ylabel("log10 u at i=(1,1,1) A [J/m^3]")
    ax.legend()
    ax.grid(alpha=0.3)
    return _png(fig)


def hull_volumes(volumes: dict[str, float]) -> bytes:
    fig, ax = plt.subplots(figsize=(4, 3))
    labels = list(volumes)
    ax.bar(labels, [volumes[k] * 1e6 for k in labels], color="tab:blue")
    ax.set_ylabel("feasible hull volume [cm^3]")
    ax.set_xlabel("theta")
    return _png(fig)


def gradient_maps(maps: dict[str, np.ndarray]) -> bytes:
    fig, axes = plt.subplots(1, len(maps), figsize=(4 * len(maps), 3.5), squeeze=False)
    for ax, (label, rows) in zip(axes[0], maps.items()):
        for eps in np.unique(rows[:, 1]):
            sel = rows[:, 1] == eps
            ax.plot(rows[sel, 0], rows[sel, 2], label=f"{np.degrees(eps):.0f} deg")
        ax.set_title(label)
        ax.set_xlabel("z [m]")
        ax.set_ylabel("M [T/m]")
        ax.grid(alpha=0.3)
    axes[0][-1].legend(title="elevation", fontsize=7)
    return _png(fig)


def lift_profiles(profiles: dict[str, np.ndarray]) -> bytes:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, rows in profiles.items():
        ax.plot(rows[:, 0], rows[:, 1] * 1e6, label=label)
    ax.set_xlabel("z on axis [m]")
    ax.set_ylabel("cycle-averaged F_z [uN]")
    ax.legend()
    ax.grid(alpha=0.3)
    return _png(fig)


def mode_comparison(rows: list[dict]) -> bytes:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    labels = [r["mode"] for r in rows]
    a1.bar(labels, [r["median_E_over_B2_A2_per_T2"] for r in rows], color="tab:gray")
    a1.set_ylabel("median E/B^2 [A^2/T^2]")
    a2.bar(labels, [100 * r["P_Ipeak_ge_threshold"] for r in rows], color="tab:red")
    a2.set_ylabel("P(I_peak >= threshold) [%]")
    for ax in (a1, a2):
        ax.tick_params(axis="x", rotation=30)
    return _png(fig)
