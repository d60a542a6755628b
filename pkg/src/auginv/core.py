"""Deterministic numerical substrate: seeded splittable RNG, sorting, sphere
sampling, and SVD helpers used by the OT estimators and Procrustes alignment.

All public operations work on float64 numpy arrays and are pure functions of
their inputs (plus an explicit RngStream).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidInputError, NumericalError


def _derive_seed(seed: int, path: tuple[str, ...]) -> int:
    # Stable across platforms: hash the seed together with the label path.
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for label in path:
        h.update(b"/")
        h.update(label.encode())
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based random stream with reproducible labeled splits.

    Identical seed plus identical call sequence gives identical outputs on any
    platform (numpy Philox). ``child(label)`` derives an independent substream
    keyed by the label path; substreams never share state with the parent.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = _path
        key = _derive_seed(self.seed, _path)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, self.path + (str(label),))

    # Thin wrappers so callers never touch the generator directly.
    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size=None, replace=True, p=None):
        return self._gen.choice(n, size=size, replace=replace, p=p)


def as_matrix(a, name: str = "input") -> np.ndarray:
    """Validate and coerce to a finite 2D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def sample_unit_directions(rng: RngStream, count: int, dim: int) -> np.ndarray:
    """Draw ``count`` uniform directions on the unit sphere in R^dim.

    Rows are standard Gaussian vectors normalized to unit Euclidean norm.
    """
    if dim < 1:
        raise InvalidInputError(f"dim must be >= 1, got {dim}")
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    v = rng.normal(size=(count, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # A zero Gaussian vector has probability zero; guard anyway.
    degenerate = norms[:, 0] == 0.0
    if np.any(degenerate):
        v[degenerate, 0] = 1.0
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def argsort(values) -> np.ndarray:
    """Stable argsort: applying the result sorts non-decreasingly, ties keep
    original order."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"expected 1D array, got shape {arr.shape}")
    if np.any(np.isnan(arr)):
        raise InvalidInputError("argsort input contains NaN")
    return np.argsort(arr, kind="stable")


def svd_full(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with orthonormal columns: a == U @ diag(S) @ Vt.

    S is non-negative and non-increasing.
    """
    arr = as_matrix(a, "svd input")
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u, s, vt
