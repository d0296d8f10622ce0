"""Voxel-seeded over-segmentation and superpoint feature pooling.

A region grows from each occupied voxel through neighbors closer than
``growth_radius`` and never leaves its seed voxel, so a superpoint is a
connected piece of the radius graph restricted to one voxel. Points with no
neighbor in range end up as singletons.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidInput
from .scene import PointCloud


@dataclass(frozen=True)
class SegCfg:
    voxel_size: float = 0.5
    growth_radius: float = 0.3

    def __post_init__(self):
        if not (self.voxel_size > 0 and self.growth_radius >= 0):
            raise InvalidInput("voxel_size must be positive and growth_radius non-negative")


@dataclass(frozen=True)
class SuperpointPartition:
    assignment: np.ndarray
    n_superpoints: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_superpoints)

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])


def oversegment(cloud: PointCloud, cfg: SegCfg = SegCfg()) -> SuperpointPartition:
    """Partition ``cloud`` into superpoints.

    Superpoints are numbered by voxel key, then by the lexicographically
    smallest coordinate of their members, so the result does not depend on
    the input point order.
    """
    pos = cloud.positions
    keys = np.floor(pos / cfg.voxel_size).astype(np.int64)
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0], keys[:, 2], keys[:, 1], keys[:, 0]))
    sk = keys[order]
    change = np.any(sk[1:] != sk[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(change) + 1, [len(order)]]).astype(np.int64)
    roots = _kernels.voxel_components(np.ascontiguousarray(pos[order]), starts, float(cfg.growth_radius))
    # roots are the smallest sorted index of each component, so first-occurrence rank gives the numbering
    is_root = roots == np.arange(len(roots))
    rank = np.cumsum(is_root) - 1
    assignment = np.empty(cloud.n, dtype=np.int64)
    assignment[order] = rank[roots]
    return SuperpointPartition(assignment, int(is_root.sum()))


def pool_features(partition: SuperpointPartition, point_features) -> np.ndarray:
    """Mean point feature of every superpoint, shape ``(N_s, C)``."""
    z = np.asarray(point_features, dtype=np.float64)
    if z.shape[0] != partition.assignment.shape[0]:
        raise InvalidInput("feature rows must match the partition")
    order = np.argsort(partition.assignment, kind="stable")
    sizes = partition.sizes
    sums = np.add.reduceat(z[order], np.concatenate([[0], np.cumsum(sizes)[:-1]]), axis=0)
    return sums / sizes[:, None]
