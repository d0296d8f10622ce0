"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from dds import _kernels, _pycore

core = pytest.importorskip("dds._core")


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")


def test_rbf_affinity_backends_agree(rng):
    for n, c in [(1, 3), (2, 2), (17, 5), (120, 32)]:
        F = rng.normal(size=(n, c))
        a = core.rbf_affinity(F, 1.0 / c)
        b = _pycore.rbf_affinity(F, 1.0 / c)
        assert np.allclose(a, b, atol=1e-12)
        assert np.array_equal(np.diag(a), np.ones(n)) and np.array_equal(np.diag(b), np.ones(n))
        assert np.array_equal(a, a.T) and np.array_equal(b, b.T)


def test_rbf_affinity_double_loop_oracle(rng):
    F = rng.normal(size=(20, 8))
    A = core.rbf_affinity(F, 1.0 / 8)
    for i in range(20):
        for j in range(20):
            assert abs(A[i, j] - np.exp(-np.sum((F[i] - F[j]) ** 2) / 8)) < 1e-12


def test_voxel_components_backends_agree(rng):
    for _ in range(30):
        n = int(rng.integers(1, 200))
        pos = np.ascontiguousarray(rng.uniform(0, 1, size=(n, 3)))
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(0, 6))), replace=False)) if n > 1 else []
        starts = np.concatenate([[0], cuts, [n]]).astype(np.int64)
        r = float(rng.uniform(0.05, 0.4))
        assert np.array_equal(core.voxel_components(pos, starts, r), _pycore.voxel_components(pos, starts, r))
