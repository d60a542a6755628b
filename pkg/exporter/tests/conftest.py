import struct

import numpy as np
import pytest


def write_micro_dataset(directory):
    """Deterministic 4-image 12x12 grayscale dataset with 2 classes."""
    directory.mkdir(parents=True, exist_ok=True)
    images = np.zeros((4, 12, 12), dtype=np.uint8)
    images[0, 2:10, 5:7] = 255          # vertical bar
    images[1, 3:9, 4:8] = 200           # block
    images[2, 5:7, 2:10] = 255          # horizontal bar
    images[3, 2:10, 2:10] = 120         # large faint block
    labels = np.array([0, 1, 0, 1], dtype=np.uint8)
    with open(directory / "images.idx", "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, 4, 12, 12))
        fh.write(images.tobytes())
    with open(directory / "labels.idx", "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, 4))
        fh.write(labels.tobytes())
    return directory


@pytest.fixture()
def micro_dataset(tmp_path):
    return write_micro_dataset(tmp_path / "micro")
