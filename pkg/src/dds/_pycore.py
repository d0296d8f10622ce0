"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""
from __future__ import annotations

import numpy as np


def _find(parent: list[int], i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def voxel_components(pos: np.ndarray, starts: np.ndarray, radius: float) -> np.ndarray:
    n = pos.shape[0]
    parent = list(range(n))
    r2 = radius * radius
    for lo, hi in zip(starts[:-1].tolist(), starts[1:].tolist()):
        if hi - lo < 2:
            continue
        block = pos[lo:hi]
        diff = block[:, None, :] - block[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        ii, jj = np.nonzero(np.triu(d2 <= r2, k=1))
        for i, j in zip((ii + lo).tolist(), (jj + lo).tolist()):
            a, b = _find(parent, i), _find(parent, j)
            if a < b:
                parent[b] = a
            elif b < a:
                parent[a] = b
    return np.array([_find(parent, i) for i in range(n)], dtype=np.int64)


def _mirror_upper(m: np.ndarray, block: int = 256) -> None:
    """Copy the strict upper triangle onto the lower one, in place.

    The Gram product need not be exactly symmetric. Block-wise copies avoid
    building an O(N^2) index array.
    """
    n = len(m)
    for s in range(0, n, block):
        e = min(s + block, n)
        m[s:e, :s] = m[:s, s:e].T
        diag = m[s:e, s:e]
        low = np.tril_indices(e - s, -1)
        diag[low] = diag.T[low]


def rbf_affinity(feats: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.einsum("ij,ij->i", feats, feats)
    d2 = feats @ feats.T
    d2 *= -2.0
    d2 += sq[:, None]
    d2 += sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    _mirror_upper(d2)
    d2 *= -gamma
    return np.exp(d2, out=d2)
