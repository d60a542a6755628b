"""Image-space augmentations with parameter sampling: rotation, affine,
additive Gaussian noise, and random resized crop, plus composite chains.

Images are float arrays of shape (h, w, c) with pixels nominally in [0, 1].
Geometric transforms use inverse-mapped bilinear interpolation with zero
fill and clamp the result to [0, 1]; noise is additive and NOT clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .errors import InvalidConfigError, InvalidInputError

AUGMENTATION_KINDS = ("identity", "rotation", "affine", "gaussian_noise", "resized_crop")


@dataclass
class AugmentationSpec:
    """One augmentation family with its parameter ranges (defaults follow the
    common library settings: rotation +-180 deg; affine +-30 deg, translate
    0.2, scale 0.8-1.2, shear +-15 deg; noise mean 0 / std 1; crop area
    0.5-0.7 with aspect 0.75-1.33)."""

    kind: str = "identity"
    rotation_degrees: tuple[float, float] = (-180.0, 180.0)
    affine_degrees: tuple[float, float] = (-30.0, 30.0)
    translate_frac: tuple[float, float] = (0.2, 0.2)
    scale_range: tuple[float, float] = (0.8, 1.2)
    shear_degrees: tuple[float, float] = (-15.0, 15.0)
    noise_mean: float = 0.0
    noise_std: float = 1.0
    crop_scale: tuple[float, float] = (0.5, 0.7)
    crop_ratio: tuple[float, float] = (0.75, 1.33)

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise InvalidConfigError(f"unknown augmentation kind {self.kind!r}")
        for lo, hi in (self.rotation_degrees, self.affine_degrees,
                       self.scale_range, self.shear_degrees,
                       self.crop_scale, self.crop_ratio):
            if lo > hi:
                raise InvalidConfigError(f"interval lower {lo} > upper {hi}")
        if not (0.0 < self.crop_scale[0] and self.crop_scale[1] <= 1.0):
            raise InvalidConfigError("crop scale must lie in (0, 1]")
        if self.noise_std < 0:
            raise InvalidConfigError("noise std must be >= 0")


# An ensemble entry is a single spec or a list applied in sequence.
SpecChain = AugmentationSpec | list[AugmentationSpec]


@dataclass
class AugmentationEnsemble:
    """Weighted collection of augmentations; identity first by convention."""

    specs: list[SpecChain] = field(
        default_factory=lambda: [AugmentationSpec("identity")]
    )
    weights: list[float] | None = None

    def __post_init__(self):
        if not self.specs:
            raise InvalidConfigError("ensemble needs at least one spec")
        if self.weights is None:
            self.weights = [1.0 / len(self.specs)] * len(self.specs)
        if len(self.weights) != len(self.specs):
            raise InvalidConfigError("weights/specs length mismatch")
        if any(w <= 0 for w in self.weights):
            raise InvalidConfigError("weights must be positive")
        total = float(sum(self.weights))
        if abs(total - 1.0) > 1e-12:
            self.weights = [w / total for w in self.weights]

    def non_identity(self) -> tuple[list[SpecChain], np.ndarray]:
        """Specs used for the s augmented draws (identity dropped when other
        members exist; the clean row already realizes it), with renormalized
        weights."""
        pairs = [
            (spec, w) for spec, w in zip(self.specs, self.weights)
            if not (isinstance(spec, AugmentationSpec) and spec.kind == "identity")
        ]
        if not pairs:
            return [self.specs[0]], np.array([1.0])
        specs, ws = zip(*pairs)
        ws = np.asarray(ws, dtype=np.float64)
        return list(specs), ws / ws.sum()


def standard_ensemble(name: str, s: int = 3) -> AugmentationEnsemble:
    """Two-element ensemble {identity, t} with weights (1/(s+1), s/(s+1)),
    or identity alone. ``name`` may be 'composite:<a>+<b>+...'."""
    if name == "identity":
        return AugmentationEnsemble([AugmentationSpec("identity")], [1.0])
    kind_map = {"rotation": "rotation", "affine": "affine",
                "noise": "gaussian_noise", "crop": "resized_crop"}
    if name.startswith("composite:"):
        parts = name.split(":", 1)[1].split("+")
        chain = [AugmentationSpec(kind_map[p]) for p in parts]
        spec: SpecChain = chain
    elif name in kind_map:
        spec = AugmentationSpec(kind_map[name])
    else:
        raise InvalidConfigError(f"unknown augmentation name {name!r}")
    w_aug = s / (s + 1) if s > 0 else 0.5
    return AugmentationEnsemble(
        [AugmentationSpec("identity"), spec], [1.0 - w_aug, w_aug]
    )


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise InvalidInputError(f"expected (h, w, c) image, got shape {img.shape}")
    return img


def sample_params(spec: AugmentationSpec, rng: RngStream) -> dict:
    """Uniform draws within each parameter interval; identity gives {}."""
    if spec.kind == "identity":
        return {}
    if spec.kind == "rotation":
        return {"degrees": float(rng.uniform(*spec.rotation_degrees))}
    if spec.kind == "affine":
        tx, ty = spec.translate_frac
        return {
            "degrees": float(rng.uniform(*spec.affine_degrees)),
            "translate": (float(rng.uniform(-tx, tx)), float(rng.uniform(-ty, ty))),
            "scale": float(rng.uniform(*spec.scale_range)),
            "shear": float(rng.uniform(*spec.shear_degrees)),
        }
    if spec.kind == "gaussian_noise":
        return {"mean": spec.noise_mean, "std": spec.noise_std}
    # resized_crop: area fraction uniform, aspect log-uniform, offsets uniform
    lo, hi = np.log(spec.crop_ratio)
    return {
        "scale_frac": float(rng.uniform(*spec.crop_scale)),
        "aspect": float(np.exp(rng.uniform(lo, hi))),
        "offset_u": float(rng.uniform()),
        "offset_v": float(rng.uniform()),
    }


def _bilinear_sample(img: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    """Sample img at float coordinates (x=col, y=row); zero outside."""
    h, w, c = img.shape
    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx = src_x - x0
    fy = src_y - y0

    def fetch(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros(yy.shape + (c,))
        out[valid] = img[yy[valid], xx[valid]]
        return out

    top = fetch(y0, x0) * (1 - fx)[..., None] + fetch(y0, x0 + 1) * fx[..., None]
    bot = fetch(y0 + 1, x0) * (1 - fx)[..., None] + fetch(y0 + 1, x0 + 1) * fx[..., None]
    return top * (1 - fy)[..., None] + bot * fy[..., None]


def _warp_affine(img: np.ndarray, inv: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Resample with source = center + inv @ (out - center - shift)."""
    h, w, _ = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - shift[0]
    dy = ys - cy - shift[1]
    src_x = cx + inv[0, 0] * dx + inv[0, 1] * dy
    src_y = cy + inv[1, 0] * dx + inv[1, 1] * dy
    return np.clip(_bilinear_sample(img, src_x, src_y), 0.0, 1.0)


def apply_rotation(img, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear, zero fill, clamped."""
    img = _check_image(img)
    if not np.isfinite(degrees):
        raise InvalidInputError("rotation angle must be finite")
    th = np.deg2rad(degrees)
    inv = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return _warp_affine(img, inv, np.zeros(2))


def apply_affine(img, degrees: float, translate, scale: float, shear: float) -> np.ndarray:
    """Center-anchored rotate-shear-scale followed by a translation given as
    a fraction of the image size."""
    img = _check_image(img)
    if abs(scale) < 1e-6:
        raise InvalidInputError("degenerate affine scale")
    h, w, _ = img.shape
    th = np.deg2rad(degrees)
    sh = np.deg2rad(shear)
    rot = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
    shear_m = np.array([[1.0, np.tan(sh)], [0.0, 1.0]])
    fwd = rot @ shear_m * scale
    shift = np.array([translate[0] * w, translate[1] * h])
    return _warp_affine(img, np.linalg.inv(fwd), shift)


def apply_gaussian_noise(img, mean: float, std: float, rng: RngStream) -> np.ndarray:
    """Additive i.i.d. Gaussian noise; deliberately not clamped."""
    img = _check_image(img)
    if std < 0:
        raise InvalidInputError("noise std must be >= 0")
    if std == 0 and mean == 0:
        return img.copy()
    return img + mean + std * rng.normal(size=img.shape)


def apply_resized_crop(img, scale_frac: float, aspect: float,
                       offset_u: float, offset_v: float) -> np.ndarray:
    """Crop a rectangle of the given area fraction and aspect ratio, placed
    by the fractional offsets, then bilinearly resize back to (h, w).

    Falls back to a center crop after 100 shrink attempts if the rectangle
    never fits.
    """
    img = _check_image(img)
    h, w, _ = img.shape
    area = scale_frac * h * w
    crop_w = np.sqrt(area * aspect)
    crop_h = np.sqrt(area / aspect)
    attempts = 0
    while (crop_w > w or crop_h > h) and attempts < 100:
        crop_w *= 0.95
        crop_h *= 0.95
        attempts += 1
    if crop_w > w or crop_h > h:
        crop_w = crop_h = min(h, w)  # center-crop fallback
        offset_u = offset_v = 0.5
    x0 = offset_u * (w - crop_w)
    y0 = offset_v * (h - crop_h)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = x0 + (xs + 0.5) * crop_w / w - 0.5
    src_y = y0 + (ys + 0.5) * crop_h / h - 0.5
    return np.clip(_bilinear_sample(img, src_x, src_y), 0.0, 1.0)


def apply_spec(img, spec: AugmentationSpec, rng: RngStream) -> np.ndarray:
    """Sample parameters for one spec and apply it."""
    params = sample_params(spec, rng.child("params"))
    if spec.kind == "identity":
        return _check_image(img).copy()
    if spec.kind == "rotation":
        return apply_rotation(img, params["degrees"])
    if spec.kind == "affine":
        return apply_affine(img, params["degrees"], params["translate"],
                            params["scale"], params["shear"])
    if spec.kind == "gaussian_noise":
        return apply_gaussian_noise(img, params["mean"], params["std"],
                                    rng.child("noise"))
    return apply_resized_crop(img, params["scale_frac"], params["aspect"],
                              params["offset_u"], params["offset_v"])


def apply_chain(img, chain: SpecChain, rng: RngStream) -> np.ndarray:
    """Apply a single spec or a composite chain in sequence."""
    if isinstance(chain, AugmentationSpec):
        return apply_spec(img, chain, rng)
    out = _check_image(img)
    for i, spec in enumerate(chain):
        out = apply_spec(out, spec, rng.child(f"step{i}"))
    return out
