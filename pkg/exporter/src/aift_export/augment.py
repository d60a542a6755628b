"""Deterministic augmentation sampling on image tensors.

Geometric transforms use torchvision's functional ops (bilinear, zero fill);
noise is additive Gaussian and not clamped. Parameters are drawn from a
counter-based generator keyed by (seed, image index, draw index), so exports
are reproducible regardless of batching.
"""

from __future__ import annotations

import numpy as np
import torch
import torchvision.transforms.functional as TF

from .errors import ExportError

DEFAULT_PARAMS = {
    "rotation_degrees": (-180.0, 180.0),
    "affine_degrees": (-30.0, 30.0),
    "translate_frac": (0.2, 0.2),
    "scale_range": (0.8, 1.2),
    "shear_degrees": (-15.0, 15.0),
    "noise_mean": 0.0,
    "noise_std": 1.0,
    "crop_scale": (0.5, 0.7),
    "crop_ratio": (0.75, 1.33),
}


def merged_params(overrides: dict) -> dict:
    params = dict(DEFAULT_PARAMS)
    for key, value in overrides.items():
        if key not in params:
            raise ExportError(f"unknown augmentation parameter {key!r}")
        params[key] = tuple(value) if isinstance(value, (list, tuple)) else value
    return params


def rng_for(seed: int, index: int, draw: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, index, draw])))


def _apply_one(img: torch.Tensor, name: str, params: dict,
               rng: np.random.Generator) -> torch.Tensor:
    if name == "identity":
        return img.clone()
    if name == "rotation":
        angle = float(rng.uniform(*params["rotation_degrees"]))
        return TF.rotate(img, angle,
                         interpolation=TF.InterpolationMode.BILINEAR)
    if name == "affine":
        _, h, w = img.shape
        tx, ty = params["translate_frac"]
        return TF.affine(
            img,
            angle=float(rng.uniform(*params["affine_degrees"])),
            translate=[float(rng.uniform(-tx, tx) * w),
                       float(rng.uniform(-ty, ty) * h)],
            scale=float(rng.uniform(*params["scale_range"])),
            shear=[float(rng.uniform(*params["shear_degrees"])), 0.0],
            interpolation=TF.InterpolationMode.BILINEAR,
        )
    if name == "noise":
        noise = rng.normal(params["noise_mean"], params["noise_std"],
                           size=tuple(img.shape))
        return img + torch.tensor(noise, dtype=img.dtype)
    if name == "crop":
        _, h, w = img.shape
        area = h * w * float(rng.uniform(*params["crop_scale"]))
        log_lo, log_hi = np.log(params["crop_ratio"])
        aspect = float(np.exp(rng.uniform(log_lo, log_hi)))
        crop_w = min(w, int(round(np.sqrt(area * aspect))))
        crop_h = min(h, int(round(np.sqrt(area / aspect))))
        top = int(rng.integers(0, h - crop_h + 1))
        left = int(rng.integers(0, w - crop_w + 1))
        return TF.resized_crop(img, top, left, crop_h, crop_w, [h, w],
                               interpolation=TF.InterpolationMode.BILINEAR)
    raise ExportError(f"unknown augmentation {name!r}")


def apply_augmentation(img: torch.Tensor, augmentation: str, params: dict,
                       rng: np.random.Generator) -> torch.Tensor:
    """Apply a named augmentation or a 'composite:<a>+<b>' chain to one
    (c, h, w) tensor."""
    names = (augmentation.split(":", 1)[1].split("+")
             if augmentation.startswith("composite:") else [augmentation])
    out = img
    for name in names:
        out = _apply_one(out, name, params, rng)
    return out
