"""Big-endian IDX image/label pair loader (pixels scaled to [0, 1])."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def load_idx_pair(directory) -> tuple[np.ndarray, np.ndarray]:
    d = Path(directory)
    images_path, labels_path = d / "images.idx", d / "labels.idx"
    if not images_path.exists() or not labels_path.exists():
        raise ExportError(f"no images.idx/labels.idx pair under {d}")
    raw = images_path.read_bytes()
    if len(raw) < 16 or struct.unpack(">I", raw[:4])[0] != IMAGES_MAGIC:
        raise ExportError(f"bad IDX image magic in {images_path}")
    n, h, w = struct.unpack(">III", raw[4:16])
    if len(raw) != 16 + n * h * w:
        raise ExportError(f"IDX image payload size mismatch in {images_path}")
    images = np.frombuffer(raw[16:], dtype=np.uint8).reshape(n, h, w) / 255.0

    raw = labels_path.read_bytes()
    if len(raw) < 8 or struct.unpack(">I", raw[:4])[0] != LABELS_MAGIC:
        raise ExportError(f"bad IDX label magic in {labels_path}")
    if struct.unpack(">I", raw[4:8])[0] != n or len(raw) != 8 + n:
        raise ExportError(f"IDX label count mismatch in {labels_path}")
    labels = np.frombuffer(raw[8:], dtype=np.uint8).astype(np.int64)
    return images, labels
