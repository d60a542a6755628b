"""Empirical sliced Wasserstein distance and the sliced dependence /
correlation estimators, plus a brute-force exact-Wasserstein oracle used by
the tests.

Empirical distributions are plain (n, d) float64 arrays with uniform weights.
All estimators are deterministic given their RngStream: shuffle permutations
are drawn from labeled substreams before projection directions, so the
differentiable versions in ``losses`` can replay the exact same randomness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import RngStream, as_matrix, sample_unit_directions
from .errors import (
    DegenerateSampleError,
    InvalidConfigError,
    InvalidInputError,
    SizeLimitError,
)

EXACT_MAX_POINTS = 10


@dataclass
class OtConfig:
    """Knobs for the sliced estimators.

    p: transport order (1 or 2). num_projections: Monte Carlo directions L.
    shuffle_both: shuffle both coordinate blocks when building the product
    surrogate (better estimate than shuffling one). num_shuffles: average the
    dependence estimate over this many independent shuffles.
    """

    p: int = 2
    num_projections: int = 128
    shuffle_both: bool = True
    epsilon_guard: float = 1e-8
    num_shuffles: int = 1

    def __post_init__(self):
        if self.p not in (1, 2):
            raise InvalidConfigError(f"order p must be 1 or 2, got {self.p}")
        if self.num_projections < 1:
            raise InvalidConfigError("num_projections must be >= 1")
        if self.num_shuffles < 1:
            raise InvalidConfigError("num_shuffles must be >= 1")
        if self.epsilon_guard <= 0:
            raise InvalidConfigError("epsilon_guard must be positive")


@dataclass
class SlicedCorrelation:
    """Raw sliced correlation value plus a collapsed-marginal flag."""

    value: float
    degenerate: bool = False

    def __float__(self):
        return float(self.value)


def wasserstein_1d(a, b, p: int = 2) -> float:
    """Closed-form 1D Wasserstein for equal-size uniform empiricals: sort both
    and average |difference|^p, then take the p-th root."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("empty input to wasserstein_1d")
    if a.size != b.size:
        raise InvalidInputError(
            f"unequal supports unsupported: {a.size} vs {b.size} points"
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite input to wasserstein_1d")
    diffs = np.abs(np.sort(a) - np.sort(b))
    return float(np.mean(diffs ** p) ** (1.0 / p))


def exact_wasserstein_small(a, b, p: int = 2) -> float:
    """Exact W_p between equal-size uniform empiricals by exhaustive search
    over permutation couplings (optimal for this case). Test oracle only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = as_matrix(a[:, None] if a.ndim == 1 else a, "a")
    b = as_matrix(b[:, None] if b.ndim == 1 else b, "b")
    n = a.shape[0]
    if b.shape[0] != n:
        raise InvalidInputError("point counts differ")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("dimensions differ")
    if n > EXACT_MAX_POINTS:
        raise SizeLimitError(f"exhaustive oracle limited to n <= {EXACT_MAX_POINTS}")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2) ** p
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    best = float(cost[np.arange(n), perms].sum(axis=1).min())
    return float((best / n) ** (1.0 / p))


def _projected_sw_pp(a: np.ndarray, b: np.ndarray, dirs: np.ndarray, p: int) -> float:
    """Mean over directions of the 1D W_p^p between the projections."""
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    return float(np.mean(np.abs(pa - pb) ** p))


def sliced_wasserstein(a, b, cfg: OtConfig, rng: RngStream) -> float:
    """Monte Carlo sliced Wasserstein distance of order cfg.p with
    cfg.num_projections directions drawn from rng."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("point counts differ (resample upstream)")
    dirs = sample_unit_directions(rng, cfg.num_projections, a.shape[1])
    return _projected_sw_pp(a, b, dirs, cfg.p) ** (1.0 / cfg.p)


def draw_shuffles(n: int, cfg: OtConfig, rng: RngStream) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-estimate (sigma_x, sigma_z) permutations for the product surrogate.

    sigma_x is the identity when cfg.shuffle_both is off. Drawn before any
    projection directions so losses can replay them.
    """
    out = []
    for j in range(cfg.num_shuffles):
        sub = rng.child(f"shuffle{j}")
        if cfg.shuffle_both:
            sx = sub.permutation(n)
            sz = sub.permutation(n)
        else:
            sx = np.arange(n)
            sz = sub.permutation(n)
        out.append((sx, sz))
    return out


def sliced_dependence(joint, split: int, cfg: OtConfig, rng: RngStream) -> float:
    """Order-p sliced dependence between the joint and a coordinate-shuffled
    product surrogate: the mean over directions of the 1D W_p^p (no final
    1/p root — the correlation normalization cancels the scale, and the
    p-power form decays to 0 at the calibrated rate for independent blocks).
    ``split`` is the column index separating the x-block from the z-block."""
    joint = as_matrix(joint, "joint")
    n, d = joint.shape
    if n < 2:
        raise DegenerateSampleError("need at least 2 rows for dependence")
    if not 0 < split < d:
        raise InvalidInputError(f"split {split} outside (0, {d})")
    x, z = joint[:, :split], joint[:, split:]
    shuffles = draw_shuffles(n, cfg, rng)
    total = 0.0
    for j, (sx, sz) in enumerate(shuffles):
        surrogate = np.concatenate([x[sx], z[sz]], axis=1)
        dirs = sample_unit_directions(rng.child(f"proj{j}"), cfg.num_projections, d)
        total += _projected_sw_pp(joint, surrogate, dirs, cfg.p)
    return total / len(shuffles)


def sliced_correlation(x_block, z_block, cfg: OtConfig, rng: RngStream) -> SlicedCorrelation:
    """Sliced Wasserstein correlation of the empirical joint of paired rows.

    Normalizes the joint dependence by the diagonal self-variance terms of
    each marginal. A denominator term below the epsilon guard means a
    collapsed marginal; the result is then 0 with the degenerate flag set.
    """
    x = as_matrix(x_block, "x_block")
    z = as_matrix(z_block, "z_block")
    if x.shape[0] != z.shape[0]:
        raise InvalidInputError("row counts differ")
    if x.shape[0] < 2:
        raise DegenerateSampleError("need at least 2 paired rows")
    sd_joint = sliced_dependence(
        np.concatenate([x, z], axis=1), x.shape[1], cfg, rng.child("joint")
    )
    sd_x = sliced_dependence(
        np.concatenate([x, x], axis=1), x.shape[1], cfg, rng.child("xdiag")
    )
    sd_z = sliced_dependence(
        np.concatenate([z, z], axis=1), z.shape[1], cfg, rng.child("zdiag")
    )
    if sd_x < cfg.epsilon_guard or sd_z < cfg.epsilon_guard:
        return SlicedCorrelation(0.0, degenerate=True)
    denom = (sd_x * sd_z + cfg.epsilon_guard) ** (1.0 / cfg.p)
    return SlicedCorrelation(sd_joint / denom)
