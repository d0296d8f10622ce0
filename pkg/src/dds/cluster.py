"""Primitive pseudo-labels from diffused superpoint features."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import pca
from .errors import DegenerateDataWarning, InvalidInput
from .superpoint import SuperpointPartition

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterCfg:
    energy_ratio: float = 0.9
    k_coarse: int = 32
    embed_dims: int = 16
    k_primitive: int = 16
    seed: int = 0
    kmeans_restarts: int = 5
    max_iter: int = 300

    def __post_init__(self):
        if not 0 < self.energy_ratio <= 1:
            raise InvalidInput("energy_ratio must lie in (0, 1]")
        if min(self.k_coarse, self.embed_dims, self.k_primitive, self.kmeans_restarts, self.max_iter) < 1:
            raise InvalidInput("cluster counts, dims and restarts must be positive")


@dataclass
class PrimitiveModel:
    centers: np.ndarray
    primitive_of_superpoint: np.ndarray
    channel_mask: np.ndarray
    coarse_labels: np.ndarray | None = None
    zero_norm_rows: int = 0
    dropped_primitives: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def to_json(self) -> str:
        doc = {
            "channel_mask": [bool(x) for x in self.channel_mask],
            "centers": [[float(v) for v in row] for row in self.centers],
            "assignments": [int(x) for x in self.primitive_of_superpoint],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PrimitiveModel":
        doc = json.loads(text)
        c = len(doc["channel_mask"])
        centers = np.array(doc["centers"], dtype=np.float64).reshape(-1, c)
        return cls(centers, np.array(doc["assignments"], dtype=np.int64),
                   np.array(doc["channel_mask"], dtype=bool))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PrimitiveModel":
        return cls.from_json(Path(path).read_text())


def select_channels(H, energy_ratio: float = 0.9):
    """Keep the highest-variance channels until they hold ``energy_ratio`` of the total variance.

    Returns ``(H_hat, channel_mask)``; kept columns stay in their original order.
    """
    H = np.asarray(H, dtype=np.float64)
    var = H.var(axis=0)
    order = np.argsort(-var, kind="stable")
    sorted_var = var[order]
    mask = np.zeros(H.shape[1], dtype=bool)
    total = sorted_var.sum()
    if total <= 0:
        mask[order[0]] = True
    elif energy_ratio >= 1.0:
        mask[var > 0] = True
    else:
        cum = np.cumsum(sorted_var)
        n_keep = int(np.searchsorted(cum, energy_ratio * total, side="left")) + 1
        mask[order[:min(n_keep, len(order))]] = True
    return H[:, mask], mask


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = np.einsum("ij,ij->i", X, X)[:, None] - 2.0 * X @ C.T + np.einsum("ij,ij->i", C, C)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        nxt = int(rng.choice(n, p=closest / total))
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(X, X[[nxt]])[:, 0])
    return X[centers].copy()


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int):
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=len(centers))
        for empty in np.flatnonzero(counts == 0):
            # reseed from the point farthest from its center
            far = int(np.argmax(d[np.arange(len(X)), new]))
            new[far] = empty
            d[far] = 0.0
            counts = np.bincount(new, minlength=len(centers))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([X[labels == j].mean(axis=0) for j in range(len(centers))])
    wcss = float(np.sum((X - centers[labels]) ** 2))
    return labels, centers, wcss


def kmeans(X, k: int, seed: int = 0, restarts: int = 5, max_iter: int = 300):
    """Lloyd iterations from k-means++ seeds; best of ``restarts`` by within-cluster sum of squares.

    Ties in the distance go to the lowest center index and ties in WCSS to
    the earliest restart. When fewer than ``k`` distinct rows exist, the
    largest clusters are split (a :class:`DegenerateDataWarning` is emitted).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidInput(f"k={k} must be in [1, {n}]")
    n_distinct = len(np.unique(X, axis=0))
    k_fit = min(k, n_distinct)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        init = _kmeans_pp(X, k_fit, rng)
        if len(init) < k_fit:
            init = np.unique(X, axis=0)[:k_fit]
        labels, centers, wcss = _lloyd(X, init, max_iter)
        if best is None or wcss < best[2]:
            best = (labels, centers, wcss)
    labels, centers = best[0].copy(), best[1]
    if k_fit < k:
        warnings.warn(f"only {n_distinct} distinct rows for k={k}; splitting largest clusters",
                      DegenerateDataWarning, stacklevel=2)
        centers = list(centers)
        for new in range(k_fit, k):
            sizes = np.bincount(labels, minlength=new)
            big = int(np.argmax(sizes))
            moved = np.flatnonzero(labels == big)[-1]
            labels[moved] = new
            centers.append(X[moved].copy())
        centers = np.stack(centers)
    return labels, centers


def _canonical_relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber labels by order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(len(order))
    return remap[labels]


def cosine_assign(H: np.ndarray, centers: np.ndarray):
    """Index of the center with the largest normalized inner product for each row.

    Zero rows go to center 0; the second return value counts them.
    """
    hn = np.linalg.norm(H, axis=1)
    cn = np.linalg.norm(centers, axis=1)
    H_hat = np.divide(H, hn[:, None], out=np.zeros_like(H), where=hn[:, None] > 0)
    C_hat = np.divide(centers, cn[:, None], out=np.zeros_like(centers), where=cn[:, None] > 0)
    labels = np.argmax(H_hat @ C_hat.T, axis=1)
    zero = hn == 0
    labels[zero] = 0
    return labels, int(zero.sum())


def fit_primitives(H_star, cfg: ClusterCfg = ClusterCfg()) -> PrimitiveModel:
    """Two-stage clustering of diffused superpoint features into primitives.

    Channel selection, a coarse KMeans (kept for inspection only), a PCA
    embedding and a second KMeans give primitive members; centers are means
    of the full diffused rows and every superpoint is finally re-assigned to
    the center with the largest cosine similarity.
    """
    H = np.asarray(H_star, dtype=np.float64)
    ns = H.shape[0]
    if cfg.k_primitive > ns:
        raise InvalidInput(f"k_primitive={cfg.k_primitive} exceeds {ns} superpoints")
    if ns >= 2:
        H_hat, channel_mask = select_channels(H, cfg.energy_ratio)
    else:
        H_hat, channel_mask = H, np.ones(H.shape[1], dtype=bool)

    coarse, _ = kmeans(H_hat, min(cfg.k_coarse, ns), cfg.seed, cfg.kmeans_restarts, cfg.max_iter)
    log.debug("coarse kmeans: %d groups over %d superpoints", len(np.unique(coarse)), ns)

    dims = min(cfg.embed_dims, H_hat.shape[1], ns)
    E = pca(H_hat, dims).scores
    members, _ = kmeans(E, cfg.k_primitive, cfg.seed + 1, cfg.kmeans_restarts, cfg.max_iter)
    members = _canonical_relabel(members)

    centers = np.stack([H[members == p].mean(axis=0) for p in range(members.max() + 1)])
    assign, n_zero = cosine_assign(H, centers)
    _, first = np.unique(assign, return_index=True)
    used = assign[np.sort(first)]
    dropped = len(centers) - len(used)
    if dropped:
        log.info("dropping %d primitives left empty by cosine reassignment", dropped)
    remap = np.full(len(centers), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return PrimitiveModel(centers[used], remap[assign], channel_mask, coarse_labels=coarse,
                          zero_norm_rows=n_zero, dropped_primitives=dropped)


def pseudo_labels(model: PrimitiveModel, partition: SuperpointPartition) -> np.ndarray:
    if model.primitive_of_superpoint.shape[0] != partition.n_superpoints:
        raise InvalidInput("model and partition disagree on the superpoint count")
    return model.primitive_of_superpoint[partition.assignment]
