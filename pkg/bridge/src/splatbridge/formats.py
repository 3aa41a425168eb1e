"""Writers for the artifact formats the reconstruction pipeline reads.

Independent implementations of the wire contracts (TFEA feature container,
0/255 mask PNGs); compatibility with the pipeline's readers is what the
round-trip tests pin down.
"""
from __future__ import annotations

import math
import struct

import numpy as np
from PIL import Image

TFEA_MAGIC = b"TFEA"
TFEA_VERSION = 1


def feature_grid(width: int, height: int, patch_size: int):
    return math.ceil(width / patch_size), math.ceil(height / patch_size)


def write_tfea(values: np.ndarray, patch_size: int, path) -> None:
    """values: (grid_h, grid_w, dim) float32, row-major patch order."""
    values = np.ascontiguousarray(values, dtype="<f4")
    grid_h, grid_w, dim = values.shape
    with open(path, "wb") as fh:
        fh.write(TFEA_MAGIC)
        fh.write(struct.pack("<IIIII", TFEA_VERSION, grid_w, grid_h, dim, patch_size))
        fh.write(values.tobytes())


def write_mask_png(bits: np.ndarray, path) -> None:
    Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_frame(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
