"""Superpoint affinity graph and feature diffusion, with spectral and PCA baselines for comparison."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import EigFailure, InvalidInput, NoConvergenceWarning, SingularSystem


@dataclass(frozen=True)
class DiffusionCfg:
    alpha: float = 0.5
    max_iters: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidInput("alpha must lie in (0, 1)")
        if self.max_iters < 1 or not self.tol > 0:
            raise InvalidInput("max_iters and tol must be positive")


@dataclass(frozen=True)
class SuperpointGraph:
    A: np.ndarray
    A_tilde: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def L(self) -> np.ndarray:
        """``I - A_tilde``; built on first use since the iterative path never needs it."""
        L = np.negative(self.A_tilde)
        L.flat[::self.n + 1] += 1.0
        return L


def build_graph(F) -> SuperpointGraph:
    """Dense RBF affinity with bandwidth ``1 / C`` and its symmetric normalization."""
    F = np.ascontiguousarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 1:
        raise InvalidInput("need an (N_s, C) feature matrix with N_s >= 1")
    A = _kernels.rbf_affinity(F, 1.0 / F.shape[1])
    degrees = A.sum(axis=1)
    # one rounding per entry, and symmetric by construction; in place to
    # keep the number of dense N_s x N_s temporaries down
    A_tilde = np.outer(degrees, degrees)
    np.sqrt(A_tilde, out=A_tilde)
    np.divide(A, A_tilde, out=A_tilde)
    return SuperpointGraph(A, A_tilde, degrees)


def diffuse_iterative(graph: SuperpointGraph, F, cfg: DiffusionCfg = DiffusionCfg()):
    """Run ``H <- (1 - alpha) F + alpha * A_tilde @ H`` from ``H = F``.

    Stops once the largest absolute change drops below ``cfg.tol`` or after
    ``cfg.max_iters`` updates; returns ``(H, iterations)``. Hitting the cap
    emits :class:`NoConvergenceWarning` instead of raising.
    """
    F = np.asarray(F, dtype=np.float64)
    H = F.copy()
    for it in range(1, cfg.max_iters + 1):
        # same update rearranged as F + alpha (A_tilde H - F) so exact fixed points stay exact
        H_next = F + cfg.alpha * (graph.A_tilde @ H - F)
        step = np.max(np.abs(H_next - H)) if H.size else 0.0
        H = H_next
        if step < cfg.tol:
            return H, it
    warnings.warn(f"diffusion stopped after {cfg.max_iters} iterations with step {step:.3g}",
                  NoConvergenceWarning, stacklevel=2)
    return H, cfg.max_iters


def diffuse_closed_form(graph: SuperpointGraph, F, alpha: float = 0.5) -> np.ndarray:
    """Fixed point ``(I + beta L)^-1 F`` with ``beta = alpha / (1 - alpha)``, via a dense solve."""
    if not 0 < alpha < 1:
        raise InvalidInput("alpha must lie in (0, 1)")
    beta = alpha / (1.0 - alpha)
    system = np.eye(graph.n) + beta * graph.L
    try:
        return scipy.linalg.solve(system, np.asarray(F, dtype=np.float64), assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc


def gft_baseline(graph: SuperpointGraph, F, keep_fraction: float = 0.25) -> np.ndarray:
    """Low-pass filter ``F`` onto the lowest-frequency Laplacian eigenvectors.

    ``ceil(keep_fraction * N_s)`` eigenvectors are kept (at least one).
    """
    if not 0 < keep_fraction <= 1:
        raise InvalidInput("keep_fraction must lie in (0, 1]")
    try:
        _, U = scipy.linalg.eigh(graph.L)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigFailure(str(exc)) from exc
    k = max(1, min(graph.n, math.ceil(keep_fraction * graph.n)))
    Uk = U[:, :k]
    return Uk @ (Uk.T @ np.asarray(F, dtype=np.float64))


@dataclass(frozen=True)
class PCAResult:
    scores: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray
    total_variance: float


def pca(X, dims: int) -> PCAResult:
    """Principal components of the rows of ``X`` via SVD.

    Each component's sign is fixed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= dims <= min(X.shape):
        raise InvalidInput(f"dims={dims} must be in [1, {min(X.shape)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    pick = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(len(Vt)), pick])
    signs[signs == 0] = 1.0
    Vt = Vt * signs[:, None]
    var = s ** 2 / X.shape[0]
    comps = Vt[:dims]
    return PCAResult(Xc @ comps.T, comps, mean, var[:dims], float(var.sum()))


def pca_baseline(F, dims: int) -> np.ndarray:
    return pca(F, dims).scores
