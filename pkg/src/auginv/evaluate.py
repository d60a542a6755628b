"""Evaluation suite: clean/augmented probe accuracy pairs, isometry structure
metrics, raw and rigid-aligned collision rates, and report serialization.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import RngStream, as_matrix, svd_full
from .errors import DegenerateSampleError, InvalidInputError


@dataclass
class PairAccuracy:
    """Accuracy (percent) on clean features and on augmented features for a
    probe trained on clean data only."""

    clean_acc: float
    aug_acc: float
    probe_kind: str = ""
    loss_kind: str = ""


@dataclass
class StructureReport:
    """Isometry statistics of the input-distance vs encoded-distance scatter."""

    l1: float
    l2: float
    slope: float
    intercept: float
    r2: float
    rmsd: float
    nrmsd: float
    cvrmsd: float
    pair_count: int


@dataclass
class CollisionReport:
    cr_raw: float
    cr_aligned: float
    alignment_residual: float


@dataclass
class RigidAlignment:
    """Orthogonal map plus translation: x -> q @ x + b."""

    q: np.ndarray
    b: np.ndarray
    residual: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.q.T + self.b


def probe_pair_accuracy(probe, adapter, clean_feats, aug_feats, labels,
                        aug_source_idx, loss_kind: str = "") -> PairAccuracy:
    """Accuracy of the probe on clean rows and on augmented rows (each
    augmented row inherits its source's label). The adapter, when present,
    encodes both sides."""
    clean = as_matrix(clean_feats, "clean_feats")
    aug = as_matrix(aug_feats, "aug_feats")
    labels = np.asarray(labels, dtype=np.int64)
    src = np.asarray(aug_source_idx, dtype=np.int64)
    if labels.shape[0] != clean.shape[0]:
        raise InvalidInputError("labels must match clean rows")
    if src.shape[0] != aug.shape[0]:
        raise InvalidInputError("aug_source_idx must match augmented rows")
    if adapter is not None:
        clean = adapter.forward(clean)
        aug = adapter.forward(aug)
    clean_acc = 100.0 * float(np.mean(probe.predict(clean) == labels))
    aug_acc = 100.0 * float(np.mean(probe.predict(aug) == labels[src]))
    return PairAccuracy(clean_acc, aug_acc, probe.probe_kind, loss_kind)


def _pair_indices(n: int, pair_budget: int, rng: RngStream):
    total = n * (n - 1) // 2
    if total <= pair_budget:
        i, j = np.triu_indices(n, k=1)
        return i, j
    i = rng.integers(0, n, size=pair_budget)
    j = rng.integers(0, n - 1, size=pair_budget)
    j = np.where(j >= i, j + 1, j)  # uniform over ordered distinct pairs
    return i, j


def structure_report(adapter, clean_feats, pair_budget: int = 2_000_000,
                     rng: RngStream | None = None) -> StructureReport:
    """Lipschitz ratios, OLS fit, and RMSD statistics of encoded vs input
    pairwise distances. Uses all pairs when they fit in the budget, else a
    seeded uniform subsample. Zero-distance input pairs are excluded from the
    Lipschitz ratios but kept in the OLS/RMSD statistics."""
    x = as_matrix(clean_feats, "clean_feats")
    n = x.shape[0]
    if n < 3:
        raise InvalidInputError("need at least 3 points")
    if pair_budget < 100:
        raise InvalidInputError("pair_budget must be >= 100")
    rng = rng or RngStream(0)
    z = adapter.forward(x) if adapter is not None else x
    i, j = _pair_indices(n, pair_budget, rng.child("pairs"))
    d = np.linalg.norm(x[i] - x[j], axis=1)
    e = np.linalg.norm(z[i] - z[j], axis=1)
    if np.all(d == 0):
        raise DegenerateSampleError("all points identical")

    nonzero = d > 0
    ratios = e[nonzero] / d[nonzero]
    l1, l2 = float(ratios.min()), float(ratios.max())

    d_mean = d.mean()
    e_mean = e.mean()
    ss_dd = float(np.sum((d - d_mean) ** 2))
    slope = float(np.sum((d - d_mean) * (e - e_mean)) / ss_dd)
    intercept = float(e_mean - slope * d_mean)
    ss_res = float(np.sum((e - (slope * d + intercept)) ** 2))
    ss_tot = float(np.sum((e - e_mean) ** 2))
    r2 = 1.0 if ss_tot == 0 and ss_res == 0 else 1.0 - ss_res / ss_tot

    rmsd = float(np.sqrt(np.mean((e - d) ** 2)))
    d_range = float(d.max() - d.min())
    nrmsd = rmsd / d_range if d_range > 0 else 0.0
    cvrmsd = rmsd / d_mean if d_mean > 0 else 0.0
    return StructureReport(l1, l2, slope, intercept, float(r2), rmsd,
                           float(nrmsd), float(cvrmsd), int(d.size))


def collision_rate(clean_feats, labels, aug_feats, aug_source_idx) -> float:
    """Fraction of augmented rows whose nearest clean neighbor belongs to a
    different class (strict inequality; ties count as non-collisions)."""
    clean = as_matrix(clean_feats, "clean_feats")
    aug = as_matrix(aug_feats, "aug_feats")
    labels = np.asarray(labels, dtype=np.int64)
    src = np.asarray(aug_source_idx, dtype=np.int64)
    if src.shape[0] != aug.shape[0]:
        raise InvalidInputError("aug_source_idx must match augmented rows")
    src_labels = labels[src]
    referenced = np.unique(src_labels)
    present = np.unique(labels)
    if not np.all(np.isin(referenced, present)):
        raise InvalidInputError("augmented rows reference a class with no clean rows")
    collisions = 0
    # Exact brute-force nearest neighbor, chunked over augmented rows.
    chunk = max(1, 10_000_000 // max(1, clean.shape[0]))
    for start in range(0, aug.shape[0], chunk):
        block = aug[start:start + chunk]
        d2 = (
            np.sum(block ** 2, axis=1)[:, None]
            + np.sum(clean ** 2, axis=1)[None, :]
            - 2.0 * block @ clean.T
        )
        lbl = src_labels[start:start + chunk]
        same = labels[None, :] == lbl[:, None]
        d_same = np.where(same, d2, np.inf).min(axis=1)
        d_diff = np.where(~same, d2, np.inf).min(axis=1)
        collisions += int(np.sum(d_diff < d_same))
    return collisions / aug.shape[0]


def rigid_align(source, target) -> RigidAlignment:
    """Least-squares orthogonal transform plus translation mapping paired
    source rows onto target rows (reflections allowed), via SVD of the
    centered cross-covariance."""
    src = as_matrix(source, "source")
    tgt = as_matrix(target, "target")
    if src.shape != tgt.shape:
        raise InvalidInputError("source/target shapes differ")
    if src.shape[0] < 2:
        raise InvalidInputError("need at least 2 paired rows")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    cov = (tgt - mu_t).T @ (src - mu_s)
    u, _, vt = svd_full(cov)
    q = u @ vt
    b = mu_t - q @ mu_s
    residual = float(np.sqrt(np.sum((src @ q.T + b - tgt) ** 2)))
    return RigidAlignment(q, b, residual)


def aligned_collision_rate(clean_feats, labels, aug_feats,
                           aug_source_idx) -> CollisionReport:
    """Raw CR plus CR after removing the best rigid motion between the
    augmented cloud and its clean anchors."""
    clean = as_matrix(clean_feats, "clean_feats")
    aug = as_matrix(aug_feats, "aug_feats")
    src = np.asarray(aug_source_idx, dtype=np.int64)
    cr_raw = collision_rate(clean, labels, aug, src)
    alignment = rigid_align(aug, clean[src])
    cr_aligned = collision_rate(clean, labels, alignment.apply(aug), src)
    return CollisionReport(cr_raw, cr_aligned, alignment.residual)


# --- report serialization --------------------------------------------------


def report_dict(pair: PairAccuracy | None = None,
                structure: StructureReport | None = None,
                collision: CollisionReport | None = None,
                extra: dict | None = None) -> dict:
    out: dict = {}
    if structure is not None:
        out.update({k: v for k, v in asdict(structure).items()
                    if k != "pair_count"})
        out["pair_count"] = structure.pair_count
    if collision is not None:
        out["cr_raw"] = collision.cr_raw
        out["cr_aligned"] = collision.cr_aligned
        out["alignment_residual"] = collision.alignment_residual
    if pair is not None:
        out["clean_acc"] = pair.clean_acc
        out["aug_acc"] = pair.aug_acc
        out["probe_kind"] = pair.probe_kind
    if extra:
        out.update(extra)
    return out


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_embeddings_csv(path, points: np.ndarray, labels: np.ndarray,
                         split: str) -> None:
    """One row per point: split tag, label, coordinates. For external
    plotting/t-SNE."""
    points = as_matrix(points, "points")
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(["split", "label"] +
                            [f"dim{i}" for i in range(points.shape[1])])
        for row, lbl in zip(points, labels):
            writer.writerow([split, int(lbl)] + [f"{v:.8g}" for v in row])
