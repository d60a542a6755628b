"""Matplotlib renderings of evaluation artifacts: the input/encoded distance
scatter, training history curves, and a 2-D embedding scatter. All figures are
written to files (Agg backend); nothing is shown interactively.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import RngStream, as_matrix  # noqa: E402

_SCATTER_CAP = 20_000


def save_structure_scatter(path, clean_feats, encoded, structure,
                           rng: RngStream | None = None) -> None:
    """Scatter of encoded vs input pairwise distances with the OLS fit and
    the identity line."""
    x = as_matrix(clean_feats, "clean_feats")
    z = as_matrix(encoded, "encoded")
    rng = rng or RngStream(0)
    n = x.shape[0]
    i = rng.integers(0, n, size=_SCATTER_CAP)
    j = rng.integers(0, n - 1, size=_SCATTER_CAP)
    j = np.where(j >= i, j + 1, j)
    d = np.linalg.norm(x[i] - x[j], axis=1)
    e = np.linalg.norm(z[i] - z[j], axis=1)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(d, e, s=2, alpha=0.2, rasterized=True)
    lim = max(float(d.max()), float(e.max())) or 1.0
    grid = np.linspace(0, lim, 50)
    ax.plot(grid, grid, "k--", lw=0.8, label="identity")
    ax.plot(grid, structure.slope * grid + structure.intercept, "r-", lw=1.2,
            label=f"fit: {structure.slope:.3f}d + {structure.intercept:.3f} "
                  f"(r2={structure.r2:.3f})")
    ax.set_xlabel("input pairwise distance")
    ax.set_ylabel("encoded pairwise distance")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_history_curves(path, history: dict) -> None:
    """Per-epoch loss (and raw correlation score when recorded)."""
    loss = history.get("epoch_loss", [])
    sc = history.get("epoch_sc", [])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(loss) + 1), loss, label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if sc:
        ax2 = ax.twinx()
        ax2.plot(range(1, len(sc) + 1), sc, "g--", label="sliced correlation")
        ax2.set_ylabel("sliced correlation")
        ax2.legend(loc="upper right", fontsize=8)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_embedding_scatter(path, points, labels, title: str = "") -> None:
    """2-D scatter colored by class. Higher-dimensional points are projected
    onto their top two principal components first."""
    pts = as_matrix(points, "points")
    labels = np.asarray(labels, dtype=np.int64)
    if pts.shape[1] > 2:
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        pts = centered @ vt[:2].T
    elif pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(pts.shape[0])])
    fig, ax = plt.subplots(figsize=(5, 5))
    for lbl in np.unique(labels):
        sel = labels == lbl
        ax.scatter(pts[sel, 0], pts[sel, 1], s=4, alpha=0.6, label=str(lbl))
    ax.legend(title="class", fontsize=7, markerscale=2)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
