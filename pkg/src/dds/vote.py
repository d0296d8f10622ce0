"""Cluster naming by mask-label voting, and the evaluation metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInput, LengthMismatch

VOTE_EPS = 1e-8


@dataclass(frozen=True)
class PointLabels:
    """Per-point label multisets in coordinate form.

    Entry ``e`` says point ``points[e]`` carries label ``names[labels[e]]``;
    a point may appear any number of times.
    """

    points: np.ndarray
    labels: np.ndarray
    names: list

    @classmethod
    def from_lists(cls, per_point, names=None) -> "PointLabels":
        if names is None:
            names = sorted({x for labs in per_point for x in labs})
        index = {name: i for i, name in enumerate(names)}
        pts, labs = [], []
        for i, ls in enumerate(per_point):
            for name in ls:
                pts.append(i)
                labs.append(index[name])
        return cls(np.array(pts, dtype=np.int64), np.array(labs, dtype=np.int64), list(names))

    @classmethod
    def from_lifted(cls, lifted, *, min_points: int = 1, names=None) -> "PointLabels":
        """Collect labels from every lifted per-view mask with at least ``min_points`` points."""
        valid = [m for m in lifted if len(m.points) >= min_points]
        if names is None:
            names = sorted({m.label for m in valid})
        index = {name: i for i, name in enumerate(names)}
        if not valid:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), list(names))
        pts = np.concatenate([m.points for m in valid]).astype(np.int64)
        labs = np.concatenate([np.full(len(m.points), index[m.label]) for m in valid]).astype(np.int64)
        return cls(pts, labs, list(names))


@dataclass(frozen=True)
class VoteTable:
    counts: np.ndarray
    ratios: np.ndarray
    names: list
    eta: float = 0.5


@dataclass
class ClusterLabeling:
    cluster_of_point: np.ndarray
    cluster_name: list
    point_name: list = field(default_factory=list)


def collect_votes(cluster_of_point, n_clusters: int, point_labels: PointLabels, *,
                  eta: float = 0.5, eps: float = VOTE_EPS) -> VoteTable:
    """Count mask labels per cluster and normalize each row by its total plus ``eps``."""
    c = np.asarray(cluster_of_point, dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= n_clusters):
        raise InvalidInput("cluster index out of range")
    q = len(point_labels.names)
    flat = c[point_labels.points] * q + point_labels.labels
    counts = np.bincount(flat, minlength=n_clusters * q).reshape(n_clusters, q)
    ratios = counts / (counts.sum(axis=1, keepdims=True) + eps)
    return VoteTable(counts, ratios, list(point_labels.names), eta)


def assign_semantics(votes: VoteTable) -> list:
    """Majority label per cluster, or ``None`` when its ratio is below ``eta``.

    Clusters without any vote stay unlabeled; ties go to the lowest label index.
    """
    if not 0 <= votes.eta <= 1:
        raise InvalidInput("eta must lie in [0, 1]")
    out = []
    for k in range(votes.counts.shape[0]):
        if votes.counts.shape[1] == 0 or votes.counts[k].sum() == 0:
            out.append(None)
            continue
        q = int(np.argmax(votes.ratios[k]))
        out.append(votes.names[q] if votes.ratios[k, q] >= votes.eta else None)
    return out


def propagate(clusters, assignments) -> ClusterLabeling:
    c = np.asarray(clusters, dtype=np.int64)
    if c.size and c.max() >= len(assignments):
        raise InvalidInput("cluster index has no assignment")
    return ClusterLabeling(c, list(assignments), [assignments[k] for k in c.tolist()])


@dataclass
class MetricReport:
    oAcc: float
    mAcc: float
    mIoU: float
    per_class_iou: dict
    matching: dict
    mode: str = "matched"
    unlabeled_fraction: float = 0.0
    per_class_acc: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "oAcc": self.oAcc,
            "mAcc": self.mAcc,
            "mIoU": self.mIoU,
            "per_class_iou": {str(k): v for k, v in self.per_class_iou.items()},
            "per_class_acc": {str(k): v for k, v in self.per_class_acc.items()},
            "matching": {str(k): v for k, v in self.matching.items()},
            "unlabeled_fraction": self.unlabeled_fraction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_table(self, method: str = "DDS") -> str:
        rows = [("Methods", "oAcc (%)", "mAcc (%)", "mIoU (%)"),
                (method, f"{100 * self.oAcc:.1f}", f"{100 * self.mAcc:.1f}", f"{100 * self.mIoU:.1f}")]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [" | ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                            for i, cell in enumerate(r)) for r in rows]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _scores(mapped: np.ndarray, gt: np.ndarray, classes: np.ndarray):
    acc, iou = {}, {}
    for c in classes.tolist():
        g = gt == c
        p = mapped == c
        inter = np.count_nonzero(g & p)
        acc[c] = inter / np.count_nonzero(g)
        iou[c] = inter / np.count_nonzero(g | p)
    o = float(np.mean(mapped == gt)) if gt.size else 0.0
    return o, float(np.mean(list(acc.values()))), float(np.mean(list(iou.values()))), acc, iou


def match_clusters(pred: np.ndarray, gt: np.ndarray, classes: np.ndarray):
    """Hungarian one-to-one map from cluster id to class maximizing total intersection.

    Returns ``(mapping, total_intersection)``; unmatched clusters are absent.
    """
    clusters = np.unique(pred)
    cidx = np.searchsorted(clusters, pred)
    gidx = np.searchsorted(classes, gt)
    inter = np.zeros((len(clusters), len(classes)), dtype=np.int64)
    np.add.at(inter, (cidx, gidx), 1)
    rows, cols = linear_sum_assignment(inter, maximize=True)
    mapping = {int(clusters[r]): int(classes[c]) for r, c in zip(rows, cols)}
    return mapping, int(inter[rows, cols].sum())


def evaluate(pred, gt, mode: str = "matched", class_names=None) -> MetricReport:
    """Accuracy and IoU metrics over the classes present in ``gt``.

    ``matched``: ``pred`` holds cluster ids, mapped to classes by Hungarian
    matching; clusters left unmatched count as errors. ``named``: ``pred``
    holds class names (``None`` = unlabeled, always wrong) compared with
    ``class_names[gt]``.
    """
    gt = np.asarray(gt, dtype=np.int64)
    if len(pred) != len(gt):
        raise LengthMismatch(f"pred has {len(pred)} entries, gt has {len(gt)}")
    classes = np.unique(gt)
    if mode == "matched":
        p = np.asarray(pred, dtype=np.int64)
        mapping, _ = match_clusters(p, gt, classes)
        lut = {k: mapping.get(k, -1) for k in np.unique(p).tolist()}
        mapped = np.array([lut[k] for k in p.tolist()], dtype=np.int64) if p.size else p
        unlabeled = 0.0
    elif mode == "named":
        if class_names is None:
            raise InvalidInput("named mode needs class_names")
        index = {name: i for i, name in enumerate(class_names)}
        mapped = np.array([index.get(x, -1) if x is not None else -1 for x in pred], dtype=np.int64)
        unlabeled = float(np.mean([x is None for x in pred])) if len(pred) else 0.0
        mapping = {}
    else:
        raise InvalidInput(f"unknown evaluation mode {mode!r}")
    o, macc, miou, acc, iou = _scores(mapped, gt, classes)
    return MetricReport(o, macc, miou, iou, mapping, mode, unlabeled, acc)
