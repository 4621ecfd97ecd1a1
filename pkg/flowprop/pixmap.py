"""Portable pixmap (binary P6, 8-bit) frame I/O."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from flowprop.errors import FormatError
from flowprop.tensors import Image


def read_pixmap(path) -> Image:
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            if img.format != "PPM":
                raise FormatError(f"{path.name} is {img.format}, not a portable pixmap", 0)
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    except UnidentifiedImageError as e:
        raise FormatError(f"{path.name} is not a readable pixmap", 0) from e
    return Image(rgb / 255.0)


def write_pixmap(image: Image, path):
    path = Path(path)
    levels = np.round(np.clip(image.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(levels).save(path, format="PPM")
    return path
