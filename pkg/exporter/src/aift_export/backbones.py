"""Backbone retrieval: pretrained model families via torch.hub/torchvision,
plus a stub (fixed seeded random linear map) for tests that must never
download weights."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ExportError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class StubBackbone:
    """Deterministic linear map from flattened pixels to `dim` features.

    The weight matrix depends only on the output dimension and the input
    size, never on the export seed, so golden files stay stable.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self._weight = None

    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        flat = batch.reshape(batch.shape[0], -1).to(torch.float64)
        if self._weight is None or self._weight.shape[1] != flat.shape[1]:
            gen = np.random.Generator(
                np.random.Philox(key=[self.dim, flat.shape[1]]))
            w = gen.normal(size=(self.dim, flat.shape[1]))
            self._weight = torch.tensor(w / np.sqrt(flat.shape[1]))
        return flat @ self._weight.T


def _hub_backbone(name: str, device: str):
    """Pretrained families; downloads weights on first use."""
    try:
        if name == "dino":
            model = torch.hub.load("facebookresearch/dino:main", "dino_vits8")
        elif name == "r-dino":
            model = torch.hub.load("facebookresearch/dino:main", "dino_resnet50")
        elif name == "swav":
            model = torch.hub.load("facebookresearch/swav:main", "resnet50")
        elif name == "clip":
            import clip  # type: ignore

            model, _ = clip.load("ViT-B/16", device=device)
            encoder = model.encode_image
            return lambda batch: encoder(batch.to(device)).detach().cpu()
        elif name == "resnet50":
            import torchvision.models as models

            net = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V2)
            net.fc = torch.nn.Identity()
            model = net
        else:
            raise ExportError(f"unknown backbone {name!r}")
    except ExportError:
        raise
    except Exception as exc:  # hub/download/runtime failures surface typed
        raise ExportError(f"failed to load backbone {name!r}: {exc}") from exc
    model.eval().to(device)

    def run(batch: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return model(batch.to(device)).detach().cpu()

    return run


def get_backbone(name: str, device: str = "cpu"):
    """Return (callable batch -> features tensor, needs_rgb flag)."""
    if name.startswith("stub:"):
        return StubBackbone(int(name.split(":", 1)[1])), False
    return _hub_backbone(name, device), True
