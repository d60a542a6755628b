"""Dataset representation and I/O.

AIFT is the binary interchange format for precomputed features: clean block,
labels, and a grouped augmented block with s_file augmentations per input.
The module also ships an IDX loader and a procedural shape generator so the
toy image pipeline is fully self-contained, plus augmented-batch assembly.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import augment
from .core import RngStream, as_matrix
from .errors import CorruptFileError, InvalidInputError
from .losses import AugmentedBatch

AIFT_MAGIC = b"AIF1"
AIFT_VERSION = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class FeatureDataset:
    """Clean feature matrix, class labels, and a grouped augmented block
    (rows [i*s_file, (i+1)*s_file) belong to input i)."""

    clean: np.ndarray            # (n, d)
    labels: np.ndarray           # (n,) int
    aug: np.ndarray              # (n*s_file, d)
    s_file: int
    metadata: str = ""

    def __post_init__(self):
        self.clean = as_matrix(self.clean, "clean")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n, d = self.clean.shape
        if self.labels.shape != (n,):
            raise InvalidInputError("labels must match clean row count")
        if np.any(self.labels < 0):
            raise InvalidInputError("labels must be non-negative")
        self.aug = np.asarray(self.aug, dtype=np.float64).reshape(n * self.s_file, d)

    @property
    def n(self) -> int:
        return self.clean.shape[0]

    @property
    def dim(self) -> int:
        return self.clean.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def aug_source_idx(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.s_file)


@dataclass
class ImageDataset:
    """Uniformly shaped raster images with labels."""

    images: np.ndarray           # (n, h, w, c) float64 in [0, 1]
    labels: np.ndarray           # (n,) int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim == 3:
            self.images = self.images[..., None]
        if self.images.ndim != 4:
            raise InvalidInputError(f"images must be (n, h, w, c), got {self.images.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.images.shape[0],):
            raise InvalidInputError("labels must match image count")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def flat_dim(self) -> int:
        return int(np.prod(self.images.shape[1:]))

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def flatten(self) -> np.ndarray:
        return self.images.reshape(self.n, -1)


# --- AIFT binary format ----------------------------------------------------


def save_aift(ds: FeatureDataset, path) -> None:
    """Layout: magic 'AIF1', u32 version, u32 n, u32 d, u32 s_file, u32 k,
    u32 metadata_len + UTF-8 metadata, f32 LE clean block, u32 labels,
    f32 LE aug block, CRC32 trailer. All little-endian, no padding."""
    meta = ds.metadata.encode("utf-8")
    buf = bytearray()
    buf += AIFT_MAGIC
    buf += struct.pack("<IIIII", AIFT_VERSION, ds.n, ds.dim, ds.s_file, ds.n_classes)
    buf += struct.pack("<I", len(meta))
    buf += meta
    buf += np.ascontiguousarray(ds.clean, dtype="<f4").tobytes()
    buf += np.ascontiguousarray(ds.labels, dtype="<u4").tobytes()
    buf += np.ascontiguousarray(ds.aug, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_aift(path) -> FeatureDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 28:
        raise CorruptFileError(f"file too short ({len(raw)} bytes) in {path}")
    if raw[:4] != AIFT_MAGIC:
        raise CorruptFileError(f"bad magic {raw[:4]!r} at offset 0 in {path}")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFileError(f"CRC mismatch at offset {len(raw) - 4} in {path}")
    version, n, d, s_file, k = struct.unpack("<IIIII", raw[4:24])
    if version != AIFT_VERSION:
        raise CorruptFileError(f"unsupported AIFT version {version}")
    meta_len = struct.unpack("<I", raw[24:28])[0]
    offset = 28
    expected = offset + meta_len + 4 * n * d + 4 * n + 4 * n * s_file * d + 4
    if len(raw) != expected:
        raise CorruptFileError(
            f"truncated or oversized payload: {len(raw)} bytes, expected {expected}"
        )
    metadata = raw[offset:offset + meta_len].decode("utf-8")
    offset += meta_len

    def block(count):
        nonlocal offset
        out = np.frombuffer(raw[offset:offset + 4 * count], dtype="<f4")
        offset += 4 * count
        return out

    clean = block(n * d).astype(np.float64).reshape(n, d)
    labels = np.frombuffer(raw[offset:offset + 4 * n], dtype="<u4").astype(np.int64)
    offset += 4 * n
    aug = block(n * s_file * d).astype(np.float64).reshape(n * s_file, d)
    if k and labels.size and int(labels.max()) >= k:
        raise CorruptFileError("label outside declared class count")
    return FeatureDataset(clean, labels, aug, s_file, metadata)


# --- IDX format ------------------------------------------------------------


def save_idx(ds: ImageDataset, images_path, labels_path) -> None:
    """Write a single-channel image dataset as a standard big-endian IDX
    image/label pair (pixels quantized to uint8)."""
    if ds.images.shape[3] != 1:
        raise InvalidInputError("IDX export supports single-channel images only")
    n, h, w, _ = ds.images.shape
    pixels = np.clip(np.round(ds.images[..., 0] * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    if np.any(ds.labels > 255):
        raise InvalidInputError("IDX labels must fit in uint8")
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(ds.labels.astype(np.uint8).tobytes())


def load_idx(images_path, labels_path) -> ImageDataset:
    """Standard big-endian IDX image/label pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or struct.unpack(">I", raw[:4])[0] != IDX_IMAGES_MAGIC:
        raise CorruptFileError(f"bad IDX image magic in {images_path}")
    n, h, w = struct.unpack(">III", raw[4:16])
    if len(raw) != 16 + n * h * w:
        raise CorruptFileError(f"IDX image payload size mismatch in {images_path}")
    images = np.frombuffer(raw[16:], dtype=np.uint8).reshape(n, h, w) / 255.0

    with open(labels_path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or struct.unpack(">I", raw[:4])[0] != IDX_LABELS_MAGIC:
        raise CorruptFileError(f"bad IDX label magic in {labels_path}")
    n_labels = struct.unpack(">I", raw[4:8])[0]
    if len(raw) != 8 + n_labels:
        raise CorruptFileError(f"IDX label payload size mismatch in {labels_path}")
    if n_labels != n:
        raise CorruptFileError(
            f"image/label count mismatch: {n} images vs {n_labels} labels"
        )
    labels = np.frombuffer(raw[8:], dtype=np.uint8).astype(np.int64)
    return ImageDataset(images, labels)


# --- procedural shapes -----------------------------------------------------

SHAPE_CLASSES = ("hbar", "vbar", "cross", "diagonal", "ell", "tee", "box", "dots")


def _render_glyph(cls: str, size: int, cx: float, cy: float, thick: int) -> np.ndarray:
    img = np.zeros((size, size))
    c = size // 2
    x = int(round(cx))
    y = int(round(cy))
    t = thick
    lo, hi = size // 4, 3 * size // 4
    if cls == "hbar":
        img[y - t:y + t + 1, lo:hi] = 1.0
    elif cls == "vbar":
        img[lo:hi, x - t:x + t + 1] = 1.0
    elif cls == "cross":
        img[y - t:y + t + 1, lo:hi] = 1.0
        img[lo:hi, x - t:x + t + 1] = 1.0
    elif cls == "diagonal":
        for i in range(lo, hi):
            j = i + (y - c)
            img[max(0, j - t):j + t + 1, max(0, i - t):i + t + 1] = 1.0
    elif cls == "ell":
        img[lo:hi, x - t:x + t + 1] = 1.0
        img[hi - 2 * t - 1:hi, x:hi] = 1.0
    elif cls == "tee":
        img[lo:lo + 2 * t + 1, lo:hi] = 1.0
        img[lo:hi, x - t:x + t + 1] = 1.0
    elif cls == "box":
        img[lo:hi, lo:hi] = 1.0
        inner = 2 * t + 1
        img[lo + inner:hi - inner, lo + inner:hi - inner] = 0.0
    else:  # dots
        step = max(3, size // 7)
        for yy in range(lo, hi, step):
            for xx in range(lo, hi, step):
                img[yy + (y - c):yy + (y - c) + t + 1,
                    xx + (x - c):xx + (x - c) + t + 1] = 1.0
    return np.clip(img, 0.0, 1.0)


def gen_shapes(n_per_class: int, classes: int, image_size: int, jitter: float,
               rng: RngStream) -> ImageDataset:
    """Procedural glyph dataset, linearly separable at zero jitter.

    jitter is the fraction of the image size used as positional noise; glyph
    thickness also varies by one pixel when jitter > 0.
    """
    if classes > len(SHAPE_CLASSES):
        raise InvalidInputError(f"at most {len(SHAPE_CLASSES)} classes supported")
    if classes < 1 or n_per_class < 1:
        raise InvalidInputError("need at least one class and one sample")
    if image_size < 16:
        raise InvalidInputError("image_size must be >= 16")
    images = []
    labels = []
    c = image_size // 2
    base_thick = max(1, image_size // 14)
    for cls_idx in range(classes):
        cls_rng = rng.child(f"class{cls_idx}")
        for i in range(n_per_class):
            r = cls_rng.child(f"sample{i}")
            dx = r.uniform(-jitter, jitter) * image_size
            dy = r.uniform(-jitter, jitter) * image_size
            thick = base_thick
            if jitter > 0 and r.uniform() < 0.5:
                thick += 1
            images.append(
                _render_glyph(SHAPE_CLASSES[cls_idx], image_size, c + dx, c + dy, thick)
            )
            labels.append(cls_idx)
    return ImageDataset(np.stack(images), np.array(labels))


# --- batch assembly --------------------------------------------------------


def make_batch(ds, indices, ensemble: augment.AugmentationEnsemble | None,
               s: int, rng: RngStream, feature_map=None,
               with_raw: bool = False) -> AugmentedBatch:
    """Assemble an augmented batch realizing the empirical pushforward.

    Image datasets are augmented in image space per sample (fresh parameters
    from per-image substreams), then flattened and optionally passed through
    a frozen feature map. Feature datasets draw s stored augmented rows per
    input without replacement (requires s <= s_file).
    """
    indices = np.asarray(indices, dtype=np.int64)
    n = indices.size
    if isinstance(ds, FeatureDataset):
        if s > ds.s_file:
            raise InvalidInputError(
                f"requested s={s} but file stores s_file={ds.s_file} augmentations"
            )
        clean = ds.clean[indices]
        rows = []
        for pos, i in enumerate(indices):
            group = ds.aug[i * ds.s_file:(i + 1) * ds.s_file]
            if s == ds.s_file:
                pick = np.arange(s)
            else:
                pick = rng.child(f"pick{pos}").choice(ds.s_file, size=s, replace=False)
            rows.append(group[np.sort(pick)])
        aug = np.concatenate(rows, axis=0) if s > 0 else np.zeros((0, ds.dim))
        return AugmentedBatch(clean, aug, s, labels=ds.labels[indices],
                              raw=clean.copy() if with_raw else None)

    if not isinstance(ds, ImageDataset):
        raise InvalidInputError(f"unsupported dataset type {type(ds).__name__}")
    raw_clean = ds.flatten()[indices]
    specs, weights = (ensemble or augment.AugmentationEnsemble()).non_identity()
    aug_flat = []
    for pos, i in enumerate(indices):
        img = ds.images[i]
        img_rng = rng.child(f"img{pos}")
        for k in range(s):
            draw_rng = img_rng.child(f"draw{k}")
            which = int(draw_rng.choice(len(specs), p=weights)) if len(specs) > 1 else 0
            out = augment.apply_chain(img, specs[which], draw_rng.child("apply"))
            aug_flat.append(out.ravel())
    aug_raw = (np.stack(aug_flat) if aug_flat
               else np.zeros((0, raw_clean.shape[1])))
    if feature_map is not None:
        clean = feature_map(raw_clean)
        aug = feature_map(aug_raw) if s > 0 else np.zeros((0, clean.shape[1]))
    else:
        clean, aug = raw_clean, aug_raw
    return AugmentedBatch(clean, aug, s, labels=ds.labels[indices],
                          raw=raw_clean if with_raw else None)
