# cython: language_level=3
"""Compiled kernels. Signatures and results mirror ``dds._pycore``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def voxel_components(const double[:, ::1] pos, const cnp.int64_t[::1] starts, double radius):
    """Connected components of the radius graph inside each voxel run.

    ``pos`` is sorted so that each voxel occupies ``pos[starts[v]:starts[v+1]]``.
    Returns, per point, the smallest index of its component.
    """
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t nv = starts.shape[0] - 1
    cdef Py_ssize_t v, i, j, a, b, lo, hi
    cdef double r2 = radius * radius
    cdef double dx, dy, dz
    parent_arr = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    with nogil:
        for v in range(nv):
            lo = starts[v]
            hi = starts[v + 1]
            for i in range(lo, hi):
                for j in range(i + 1, hi):
                    dx = pos[i, 0] - pos[j, 0]
                    dy = pos[i, 1] - pos[j, 1]
                    dz = pos[i, 2] - pos[j, 2]
                    if dx * dx + dy * dy + dz * dz <= r2:
                        a = _find(parent, i)
                        b = _find(parent, j)
                        if a < b:
                            parent[b] = a
                        elif b < a:
                            parent[a] = b
        for i in range(n):
            parent[i] = _find(parent, i)
    return parent_arr.astype(np.int64)


def rbf_affinity(const double[:, ::1] feats, double gamma):
    """Dense ``exp(-gamma * ||f_i - f_j||^2)`` with an exact unit diagonal."""
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t c = feats.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, d, val
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i, i] = 1.0
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(c):
                    d = feats[i, k] - feats[j, k]
                    acc = acc + d * d
                val = exp(-gamma * acc)
                out[i, j] = val
                out[j, i] = val
    return out_arr
