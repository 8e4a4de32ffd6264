"""Raster helpers: face crops and phase-1 heatmap targets.

Rasters are ``float`` arrays of shape ``(H, W, C)`` with values in ``[0, 1]``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .types import HEATMAP_SIZE, HeadBox, HeatmapTarget, ValidationError

FACE_SIZE = 224
HEATMAP_SIGMA = 3.0


def load_image(ref) -> np.ndarray:
    """Return ``ref`` as a float raster; paths are read as 8-bit PNG/JPEG."""
    if isinstance(ref, np.ndarray):
        return ref
    from PIL import Image

    with Image.open(Path(ref)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_image(raster: np.ndarray, path) -> None:
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(raster) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(Path(path))


def _resample_axis(n_src: float, start: float, extent: float, n_out: int):
    # pixel-center sampling: output j maps to source start + (j + 0.5) * extent / n_out - 0.5
    u = start + (np.arange(n_out) + 0.5) * (extent / n_out) - 0.5
    u = np.clip(u, 0.0, n_src - 1)
    i0 = np.floor(u).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_src - 1)
    w = (u - i0).astype(np.float64)
    return i0, i1, w


def resize_region(image: np.ndarray, x0: float, y0: float, x1: float, y1: float,
                  size: int) -> np.ndarray:
    """Bilinear resample of the pixel rectangle ``[x0, x1) x [y0, y1)``."""
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    r0, r1, wr = _resample_axis(h, y0, y1 - y0, size)
    c0, c1, wc = _resample_axis(w, x0, x1 - x0, size)
    top = img[r0][:, c0] * (1 - wc)[None, :, None] + img[r0][:, c1] * wc[None, :, None]
    bot = img[r1][:, c0] * (1 - wc)[None, :, None] + img[r1][:, c1] * wc[None, :, None]
    out = top * (1 - wr)[:, None, None] + bot * wr[:, None, None]
    out = out.astype(img.dtype, copy=False)
    return out[..., 0] if squeeze else out


def crop_face(image: np.ndarray, box: HeadBox, size: int = FACE_SIZE) -> np.ndarray:
    """Crop ``box`` from ``image`` and resample it to ``size x size``."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    x0, x1 = box.x_min * w, box.x_max * w
    y0, y1 = box.y_min * h, box.y_max * h
    if x1 - x0 < 2 or y1 - y0 < 2:
        raise ValidationError("box", f"degenerate crop {x1 - x0:.2f}x{y1 - y0:.2f} px")
    out = resize_region(img, x0, y0, x1, y1, size)
    if np.issubdtype(out.dtype, np.floating):
        np.clip(out, 0.0, 1.0, out=out)
    return out


def heatmap_peak_cell(gaze_point) -> tuple:
    """``(col, row)`` cell of a normalized gaze point, rounding half up."""
    gx, gy = gaze_point
    n = HEATMAP_SIZE - 1
    return (int(math.floor(gx * n + 0.5)), int(math.floor(gy * n + 0.5)))


def build_heatmap_target(gaze_point, sigma: float = HEATMAP_SIGMA) -> HeatmapTarget:
    """Unnormalized Gaussian centred on the gaze cell; rows index y."""
    gx, gy = float(gaze_point[0]), float(gaze_point[1])
    if not (0.0 <= gx <= 1.0 and 0.0 <= gy <= 1.0):
        raise ValidationError("gaze_point", f"({gx}, {gy}) outside the unit square")
    c0, r0 = heatmap_peak_cell((gx, gy))
    idx = np.arange(HEATMAP_SIZE, dtype=np.float64)
    d2 = (idx[:, None] - r0) ** 2 + (idx[None, :] - c0) ** 2
    return HeatmapTarget(np.exp(-d2 / (2.0 * sigma * sigma)))


def box_mask(box: HeadBox, size: int) -> np.ndarray:
    """Binary ``size x size`` mask of pixels whose centres fall in ``box``."""
    centers = (np.arange(size) + 0.5) / size
    cols = (centers >= box.x_min) & (centers <= box.x_max)
    rows = (centers >= box.y_min) & (centers <= box.y_max)
    return (rows[:, None] & cols[None, :]).astype(np.float32)
