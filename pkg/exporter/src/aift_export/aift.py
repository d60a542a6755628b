"""AIFT v1 writer (and a reader used by the exporter's own tests).

Layout: magic 'AIF1', u32 version, u32 n, u32 d, u32 s_file, u32 k,
u32 metadata_len + UTF-8 metadata, f32 LE clean block (n x d), u32 labels,
f32 LE augmented block (n*s_file x d, grouped by input), CRC32 trailer.
All little-endian, no padding.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import ExportError

MAGIC = b"AIF1"
VERSION = 1


def write_aift(path, clean: np.ndarray, labels: np.ndarray, aug: np.ndarray,
               s_file: int, metadata: str = "") -> None:
    clean = np.asarray(clean, dtype=np.float64)
    aug = np.asarray(aug, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = clean.shape
    if labels.shape != (n,):
        raise ExportError("labels must match clean row count")
    if aug.shape != (n * s_file, d):
        raise ExportError(
            f"augmented block must be ({n * s_file}, {d}), got {aug.shape}"
        )
    if np.any(labels < 0):
        raise ExportError("labels must be non-negative")
    k = int(labels.max()) + 1 if n else 0
    meta = metadata.encode("utf-8")
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<IIIII", VERSION, n, d, s_file, k)
    buf += struct.pack("<I", len(meta))
    buf += meta
    buf += np.ascontiguousarray(clean, dtype="<f4").tobytes()
    buf += np.ascontiguousarray(labels, dtype="<u4").tobytes()
    buf += np.ascontiguousarray(aug, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def read_aift(path):
    """Minimal validating reader returning (clean, labels, aug, s_file,
    metadata). Used to verify round trips without the primary package."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 28 or raw[:4] != MAGIC:
        raise ExportError(f"not an AIFT file: {path}")
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != struct.unpack("<I", raw[-4:])[0]:
        raise ExportError(f"CRC mismatch in {path}")
    version, n, d, s_file, _k = struct.unpack("<IIIII", raw[4:24])
    if version != VERSION:
        raise ExportError(f"unsupported AIFT version {version}")
    meta_len = struct.unpack("<I", raw[24:28])[0]
    offset = 28
    metadata = raw[offset:offset + meta_len].decode("utf-8")
    offset += meta_len
    clean = np.frombuffer(raw[offset:offset + 4 * n * d],
                          dtype="<f4").reshape(n, d)
    offset += 4 * n * d
    labels = np.frombuffer(raw[offset:offset + 4 * n], dtype="<u4")
    offset += 4 * n
    aug = np.frombuffer(raw[offset:offset + 4 * n * s_file * d],
                        dtype="<f4").reshape(n * s_file, d)
    return clean, labels.astype(np.int64), aug, s_file, metadata
