"""Export specification and vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ExportError

# Pretrained model families plus the stub used for integration tests.
# Stub ids take the form "stub:<dim>" (fixed seeded random linear map).
BACKBONE_FAMILIES = ("dino", "swav", "r-dino", "clip", "resnet50")

AUGMENTATION_NAMES = ("identity", "rotation", "affine", "noise", "crop")


@dataclass
class ExportSpec:
    """Everything needed to reproduce one export run.

    backbone: one of BACKBONE_FAMILIES or "stub:<dim>".
    dataset: directory containing an images.idx/labels.idx pair.
    augmentation: name from AUGMENTATION_NAMES or "composite:<a>+<b>+...".
    overrides: optional augmentation parameter overrides (interval tuples or
    scalars keyed by parameter name).
    """

    backbone: str
    dataset: str
    output: str
    augmentation: str = "identity"
    overrides: dict = field(default_factory=dict)
    s_file: int = 3
    device: str = "cpu"
    seed: int = 0
    batch_size: int = 64

    def __post_init__(self):
        if self.s_file < 1:
            raise ExportError("s_file must be >= 1")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if not self._backbone_ok():
            raise ExportError(
                f"unknown backbone {self.backbone!r}; expected one of "
                f"{BACKBONE_FAMILIES} or 'stub:<dim>'"
            )
        for name in self._augmentation_parts():
            if name not in AUGMENTATION_NAMES:
                raise ExportError(
                    f"unknown augmentation {name!r}; expected one of "
                    f"{AUGMENTATION_NAMES}"
                )

    def _backbone_ok(self) -> bool:
        if self.backbone in BACKBONE_FAMILIES:
            return True
        if self.backbone.startswith("stub:"):
            try:
                return int(self.backbone.split(":", 1)[1]) >= 1
            except ValueError:
                return False
        return False

    def _augmentation_parts(self) -> list[str]:
        if self.augmentation.startswith("composite:"):
            return self.augmentation.split(":", 1)[1].split("+")
        return [self.augmentation]
