"""Top-down label maps rendered as PNG images."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import LengthMismatch

# Class i is drawn with PALETTE[i % len(PALETTE)]; unlabeled points use UNLABELED.
PALETTE = np.array([
    (128, 64, 128), (230, 25, 75), (255, 225, 25), (70, 70, 70),
    (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200),
    (128, 0, 0), (170, 255, 195), (128, 128, 0), (0, 0, 128),
], dtype=np.uint8)
UNLABELED = np.array((160, 160, 160), dtype=np.uint8)
BACKGROUND = np.array((0, 0, 0), dtype=np.uint8)
EMPTY_SIZE = 16


def label_indices(labels, class_names=None) -> np.ndarray:
    """Integer class ids from ints or names; ``None``, unknown names and negatives become -1."""
    labels = list(labels) if not isinstance(labels, np.ndarray) else labels
    if isinstance(labels, np.ndarray) and labels.dtype.kind in "iu":
        return labels.astype(np.int64)
    if class_names is None:
        class_names = sorted({x for x in labels if isinstance(x, str)})
    index = {name: i for i, name in enumerate(class_names)}
    out = []
    for x in labels:
        if x is None:
            out.append(-1)
        elif isinstance(x, str):
            out.append(index.get(x, -1))
        else:
            out.append(int(x))
    return np.array(out, dtype=np.int64)


def rasterize(positions, labels, resolution: float = 0.1) -> np.ndarray:
    """``H x W`` label raster, -2 for empty pixels.

    Pixel centers sit at ``lo + k * res`` where ``lo`` is the minimum x/y
    of the cloud, so a layout sampled at the raster resolution puts one point
    at each pixel center. Rows count from the top (largest ``y``). The
    highest point in a pixel wins, ties going to the lower point index.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    lab = np.asarray(labels, dtype=np.int64)
    if len(lab) != len(pos):
        raise LengthMismatch(f"{len(lab)} labels for {len(pos)} points")
    if len(pos) == 0:
        return np.full((EMPTY_SIZE, EMPTY_SIZE), -2, dtype=np.int64)
    lo = pos[:, :2].min(axis=0)
    cell = np.floor((pos[:, :2] - lo) / resolution + 0.5).astype(np.int64)
    w, h = cell[:, 0].max() + 1, cell[:, 1].max() + 1
    row = h - 1 - cell[:, 1]
    col = cell[:, 0]
    # sort so the winner of each pixel comes first: highest z, then lowest index
    order = np.lexsort((np.arange(len(pos)), -pos[:, 2], row * w + col))
    flat = (row * w + col)[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    raster = np.full(h * w, -2, dtype=np.int64)
    raster[flat[first]] = lab[order][first]
    return raster.reshape(h, w)


def colorize(raster: np.ndarray) -> np.ndarray:
    rgb = np.empty(raster.shape + (3,), dtype=np.uint8)
    rgb[:] = BACKGROUND
    rgb[raster == -1] = UNLABELED
    known = raster >= 0
    rgb[known] = PALETTE[raster[known] % len(PALETTE)]
    return rgb


def export_bev(positions, labels, path, *, resolution: float = 0.1, class_names=None) -> Path:
    """Write the bird's-eye label map of a cloud to ``path`` as PNG."""
    if hasattr(positions, "positions"):
        positions = positions.positions
    raster = rasterize(positions, label_indices(labels, class_names), resolution)
    path = Path(path)
    Image.fromarray(colorize(raster)).save(path, format="PNG")
    return path
