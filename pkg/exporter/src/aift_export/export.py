"""Export orchestration: load images, normalize, augment, run the backbone,
serialize to AIFT v1."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .aift import write_aift
from .augment import apply_augmentation, merged_params, rng_for
from .backbones import IMAGENET_MEAN, IMAGENET_STD, get_backbone
from .errors import ExportError
from .idx import load_idx_pair
from .spec import ExportSpec


def _to_tensors(images: np.ndarray, needs_rgb: bool) -> torch.Tensor:
    """(n, h, w) grayscale in [0, 1] -> (n, c, h, w) float tensor, replicated
    to three channels for pretrained backbones."""
    t = torch.tensor(images, dtype=torch.float64).unsqueeze(1)
    if needs_rgb:
        t = t.repeat(1, 3, 1, 1).to(torch.float32)
    return t


def _normalize(batch: torch.Tensor) -> torch.Tensor:
    """ImageNet channel statistics; grayscale uses their channel means."""
    c = batch.shape[1]
    if c == 3:
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    else:
        mean = torch.tensor([float(np.mean(IMAGENET_MEAN))]).view(1, 1, 1, 1)
        std = torch.tensor([float(np.mean(IMAGENET_STD))]).view(1, 1, 1, 1)
    return (batch - mean.to(batch.dtype)) / std.to(batch.dtype)


def export_features(spec: ExportSpec) -> Path:
    """Run the full export; returns the written AIFT path."""
    images, labels = load_idx_pair(spec.dataset)
    backbone, needs_rgb = get_backbone(spec.backbone, spec.device)
    tensors = _normalize(_to_tensors(images, needs_rgb))
    params = merged_params(spec.overrides)

    n = tensors.shape[0]
    clean_blocks = []
    aug_blocks = []
    for start in range(0, n, spec.batch_size):
        batch = tensors[start:start + spec.batch_size]
        clean_blocks.append(backbone(batch).to(torch.float64).numpy())
        views = []
        for offset in range(batch.shape[0]):
            img = batch[offset]
            for k in range(spec.s_file):
                rng = rng_for(spec.seed, start + offset, k)
                views.append(apply_augmentation(img, spec.augmentation,
                                                params, rng))
        aug_blocks.append(
            backbone(torch.stack(views)).to(torch.float64).numpy())
    clean = np.concatenate(clean_blocks, axis=0)
    aug = np.concatenate(aug_blocks, axis=0)
    if not (np.all(np.isfinite(clean)) and np.all(np.isfinite(aug))):
        raise ExportError("backbone produced non-finite features")

    metadata = json.dumps({
        "exporter_version": "0.1.0",
        "backbone": spec.backbone,
        # Basename only: keeps identical exports byte-identical across hosts.
        "dataset": Path(spec.dataset).name,
        "augmentation": spec.augmentation,
        "augmentation_params": {k: list(v) if isinstance(v, tuple) else v
                                for k, v in params.items()},
        "normalization": "imagenet, applied before augmentation",
        "s_file": spec.s_file,
        "seed": spec.seed,
    }, sort_keys=True)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_aift(out, clean, labels, aug, spec.s_file, metadata)
    return out
