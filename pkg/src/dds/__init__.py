"""Annotation-free 3D scene labeling at desk scale.

Teacher features and masks come from files (or the synthetic generator);
everything downstream of them is implemented here: distillation losses,
superpoints, graph diffusion, primitive clustering, mask voting and metrics.
"""
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
