"""Image file I/O: PFM for linear-light data, 16-bit PNG for display export.

PFM convention here: header ``PF`` (color) or ``Pf`` (gray), dimensions
``width height``, scale line ``-1.0`` (little-endian floats), rows stored
bottom-up. Values are float32 in the file; we promote to float64 in memory.
"""

from __future__ import annotations

import os
import re

import cv2
import numpy as np

from .errors import StructuralError
from .image import GrayMap, LinearImage


def write_pfm(path: str, img: LinearImage | GrayMap) -> None:
    arr = img.data.astype(np.float32)
    color = arr.ndim == 3
    height, width = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(b"PF\n" if color else b"Pf\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).tobytes())


def read_pfm(path: str) -> LinearImage | GrayMap:
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise StructuralError(f"{path}: not a PFM file (header {header!r})")
        dims = re.match(rb"^(\d+)\s+(\d+)\s*$", f.readline())
        if not dims:
            raise StructuralError(f"{path}: malformed PFM dimension line")
        width, height = int(dims.group(1)), int(dims.group(2))
        pfm_scale = float(f.readline().rstrip())
        buf = f.read(width * height * channels * 4)
    expected = width * height * channels * 4
    if len(buf) != expected:
        raise StructuralError(f"{path}: truncated PFM payload ({len(buf)} of {expected} bytes)")
    data = np.frombuffer(buf, dtype="<f4" if pfm_scale < 0 else ">f4")
    data = data.reshape(height, width, channels) if channels == 3 else data.reshape(height, width)
    data = np.flipud(data).astype(np.float64)
    return LinearImage(data) if channels == 3 else GrayMap(data)


def write_png16(path: str, img: LinearImage | GrayMap) -> None:
    """Display export: values clipped to [0, 1] and quantized to 16 bits."""
    q = np.round(np.clip(img.data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if q.ndim == 3:
        q = q[:, :, ::-1]  # cv2 writes BGR
    if not cv2.imwrite(path, q):
        raise IOError(f"failed to write {path}")


def read_image(path: str) -> LinearImage | GrayMap:
    """Read PFM directly or PNG assuming the stored values are linear."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise StructuralError(f"{path}: unreadable PNG")
        peak = 65535.0 if raw.dtype == np.uint16 else 255.0
        data = raw.astype(np.float64) / peak
        if data.ndim == 3:
            if data.shape[2] == 4:
                data = data[:, :, :3]
            return LinearImage(data[:, :, ::-1])
        return GrayMap(data)
    raise StructuralError(f"{path}: unsupported image extension {ext!r}")


def read_linear_image(path: str) -> LinearImage:
    img = read_image(path)
    if isinstance(img, GrayMap):
        raise StructuralError(f"{path}: expected a 3-channel image")
    return img


def read_gray(path: str) -> GrayMap:
    img = read_image(path)
    if isinstance(img, LinearImage):
        # Accept an RGB file holding a gray signal; average the channels.
        return GrayMap(img.data.mean(axis=2))
    return img
