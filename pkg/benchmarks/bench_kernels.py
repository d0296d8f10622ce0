"""Compare the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeats 5]

Prints a CSV table ``kernel,size,cython_s,python_s,speedup`` and checks
that both backends agree on every input. Needs the extension built
(``pip install -e . --no-build-isolation``).
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from dds import _pycore

try:
    from dds import _core
except ImportError:
    sys.exit("dds._core is not built; install the package with the extension enabled")


def voxel_input(n: int, rng, voxel: float = 1.0):
    # points at grid spacing 0.2 with jitter, grouped by voxel like oversegment does
    side = max(1, round(n ** (1 / 3)))
    g = np.stack(np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), -1).reshape(-1, 3)[:n]
    pos = 0.2 * g + rng.uniform(-0.02, 0.02, size=g.shape)
    keys = np.floor(pos / voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    pos, keys = np.ascontiguousarray(pos[order]), keys[order]
    change = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(change) + 1, [len(pos)]]).astype(np.int64)
    return pos, starts


def best(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    print("kernel,size,cython_s,python_s,speedup")
    for n in (1000, 8000, 27000):
        pos, starts = voxel_input(n, rng)
        a = _core.voxel_components(pos, starts, 0.25)
        b = _pycore.voxel_components(pos, starts, 0.25)
        assert np.array_equal(a, b), "voxel_components backends disagree"
        tc = best(lambda: _core.voxel_components(pos, starts, 0.25), args.repeats)
        tp = best(lambda: _pycore.voxel_components(pos, starts, 0.25), args.repeats)
        print(f"voxel_components,{n},{tc:.6f},{tp:.6f},{tp / tc:.1f}")

    for n in (250, 500, 1000, 2000):
        F = rng.normal(size=(n, 32))
        a, b = _core.rbf_affinity(F, 1 / 32), _pycore.rbf_affinity(F, 1 / 32)
        assert np.allclose(a, b, rtol=0, atol=1e-12), "rbf_affinity backends disagree"
        tc = best(lambda: _core.rbf_affinity(F, 1 / 32), args.repeats)
        tp = best(lambda: _pycore.rbf_affinity(F, 1 / 32), args.repeats)
        print(f"rbf_affinity,{n},{tc:.6f},{tp:.6f},{tp / tc:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
