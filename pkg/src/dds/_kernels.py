"""Kernel backend selection.

The compiled extension is used when it imports; set ``DDS_PURE_PYTHON=1``
to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pycore

if os.environ.get("DDS_PURE_PYTHON") == "1":
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pycore
        BACKEND = "python"

voxel_components = _impl.voxel_components
rbf_affinity = _impl.rbf_affinity

__all__ = ["BACKEND", "voxel_components", "rbf_affinity"]
