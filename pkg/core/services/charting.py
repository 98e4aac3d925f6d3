# core/services/charting.py
from __future__ import annotations

import io
import math
from typing import Iterable, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")  # headless must be set before importing pyplot

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _moving_avg(values: Sequence[float], k: Optional[int]) -> List[float]:
    if not k or k <= 1:
        return [float(v) for v in values]
    out: List[float] = []
    s = 0.0
    for i, v in enumerate(values):
        s += float(v)
        if i >= k:
            s -= float(values[i - k])
        n = min(i + 1, k)
        out.append(s / n)
    return out


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buf, format="png")
    plt.close(fig)
    return buf.getvalue()


def render_training_curves_png(
    rows: Iterable[Mapping[str, float]],
    *,
    width: int = 900,
    height: int = 600,
    smooth: Optional[int] = None,
) -> bytes:
    """Mean reward, success rate and losses per PPO update, from metrics.csv rows."""
    rows = list(rows)
    dpi = 100
    fig, axes = plt.subplots(3, 1, figsize=(width / dpi, height / dpi), dpi=dpi, sharex=True)

    if not rows:
        for ax in axes:
            ax.text(0.5, 0.5, "No data", ha="center", va="center", transform=ax.transAxes)
        return _png(fig)

    xs = [int(r["update"]) for r in rows]
    panels = (
        (axes[0], ("mean_reward",), "reward / step"),
        (axes[1], ("success_rate",), "success rate"),
        (axes[2], ("policy_loss", "value_loss", "entropy"), "loss"),
    )
    for ax, keys, label in panels:
        for key in keys:
            ys = [float(r[key]) for r in rows]
            ax.plot(xs, ys, linewidth=1.2, label=key)
            if smooth:
                ax.plot(xs, _moving_avg(ys, smooth), linestyle="--", linewidth=1.0, label=f"{key} MA({smooth})")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.25)
        ax.legend(loc="best", fontsize="small")
    axes[1].set_ylim(-0.02, 1.02)
    axes[2].set_xlabel("PPO update")
    axes[0].set_title("Residual policy training")
    return _png(fig)


def render_cross_sections_png(meshes: Sequence, *, width: int = 1000, height: int = 240) -> bytes:
    """One panel per mesh: the z = 0 cross-section (equator ring), titled by eps2."""
    dpi = 100
    n = max(1, len(meshes))
    fig, axes = plt.subplots(1, n, figsize=(width / dpi, height / dpi), dpi=dpi, squeeze=False)
    for ax, mesh in zip(axes[0], meshes):
        ring = mesh.ring(mesh.n_eta // 2)
        closed = np.vstack([ring, ring[:1]])
        ax.plot(closed[:, 0] * 1000.0, closed[:, 1] * 1000.0, linewidth=1.4)
        ax.set_aspect("equal")
        ax.set_title(f"eps2 = {mesh.shape.eps2:g}", fontsize="small")
        lim = 1100.0 * max(mesh.shape.a1, mesh.shape.a2)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.grid(True, alpha=0.25)
        ax.tick_params(labelsize="x-small")
    axes[0][0].set_ylabel("y (mm)")
    return _png(fig)


def render_success_bars_png(rates: Mapping[str, Mapping[str, float]], *, width: int = 700, height: int = 360) -> bytes:
    """Grouped ID / OOD success-rate bars per training condition."""
    dpi = 100
    fig = plt.figure(figsize=(width / dpi, height / dpi), dpi=dpi)
    ax = fig.add_subplot(111)
    names = list(rates)
    if not names:
        ax.text(0.5, 0.5, "No data", ha="center", va="center", transform=ax.transAxes)
        return _png(fig)
    x = np.arange(len(names))
    w = 0.38
    id_rates = [rates[k].get("id", math.nan) for k in names]
    ood_rates = [rates[k].get("ood", math.nan) for k in names]
    ax.bar(x - w / 2, id_rates, w, label="ID")
    ax.bar(x + w / 2, ood_rates, w, label="OOD")
    ax.set_xticks(x, names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("success rate")
    ax.set_title("BC success by training condition")
    ax.grid(True, axis="y", alpha=0.25)
    ax.legend(loc="best")
    return _png(fig)


__all__ = ["render_training_curves_png", "render_cross_sections_png", "render_success_bars_png"]
