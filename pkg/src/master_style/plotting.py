"""Matplotlib figures written next to the CSV outputs (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .meta import KSweepRow, LogRow, smooth  # noqa: E402
from .objectives import CONTENT_2D, STYLE_2D, DistortionReport  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(Path(path), dpi=100, metadata=_META)
    plt.close(fig)


def plot_losses(log: Sequence[LogRow], path, window: int = 50, title: str = "") -> None:
    """Raw and smoothed content/style/total losses against step index."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    steps = np.arange(len(log))
    for ax, key in zip(axes, ("content", "style", "total")):
        v = np.array([getattr(r, f"loss_{key}") for r in log])
        ax.plot(steps, v, lw=0.6, alpha=0.4, label="raw")
        if len(v):
            ax.plot(steps, smooth(v, window), lw=1.6, label=f"mean of last {window}")
        ax.set_title(f"{key} loss")
        ax.set_xlabel("inner step")
    axes[0].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_k_sweep(rows: Sequence[KSweepRow], path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ks = [r.k for r in rows]
    ax.plot(ks, [r.style_loss for r in rows], "o-", label="mean")
    for r in rows:
        ax.scatter([r.k] * len(r.per_style), r.per_style, s=10, alpha=0.4, color="gray")
    ax.set_xlabel("inner steps k")
    ax.set_ylabel("adapted style loss")
    ax.set_xticks(ks)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_distortion(report: DistortionReport, path) -> None:
    """Content vectors before and after adding the dominant style vector, plus the gamma sweep."""
    c, s = np.array(CONTENT_2D), np.array(STYLE_2D)
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(9, 3.8))
    for vec, style, label in [(c[0], "C0", "c1"), (c[1], "C1", "c2"), (s[0], "C2", "s1"), (s[1], "C3", "s2"),
                              (c[0] + s[0], "C0", "c1+s1"), (c[1] + s[0], "C1", "c2+s1")]:
        ls = "--" if "+" in label else "-"
        ax.annotate("", xy=vec, xytext=(0, 0), arrowprops=dict(arrowstyle="->", color=style, ls=ls))
        ax.text(*vec, label, color=style, fontsize=8)
    lim = np.abs(np.vstack([c, s, c + s[0]])).max() + 1
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title(f"cos {report.cos_before:.3f} -> {report.cos_after_residual:.3f}")
    bx.semilogx(report.gammas, report.cos_after_scaled, "o-", label="scaled content")
    bx.axhline(report.cos_before, color="gray", ls=":", label="before")
    bx.set_xlabel("gamma")
    bx.set_ylabel("cosine after fusion")
    bx.legend(fontsize=8)
    _save(fig, path)


def plot_images(images: Sequence[np.ndarray], titles: Sequence[str], path) -> None:
    fig, axes = plt.subplots(1, len(images), figsize=(2.4 * len(images), 2.6), squeeze=False)
    for ax, img, t in zip(axes[0], images, titles):
        ax.imshow(np.clip(img, 0, 1))
        ax.set_title(t, fontsize=9)
        ax.axis("off")
    _save(fig, path)
