"""Multi-view teacher features and lifting of 2D masks to 3D mask groups."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, MismatchedChannels
from .scene import CameraModel, PointCloud, project_cloud

TEACHER_EPS = 1e-8


@dataclass(frozen=True)
class MaskMergeConfig:
    merge_iou: float = 0.5
    min_mask_points: int = 10


@dataclass(frozen=True)
class TeacherField:
    features: np.ndarray
    visible: np.ndarray
    view_counts: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LiftedMask:
    view: int
    index: int
    label: str
    points: np.ndarray


@dataclass(frozen=True)
class MaskGroups:
    """Disjoint 3D mask groups.

    ``point_mask`` holds 1-based group ids with -1 for uncovered points, so
    ``groups[m - 1]`` are the members of group ``m``.
    """

    groups: list
    labels: list
    point_mask: np.ndarray
    lifted: list = field(default_factory=list, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.groups)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _visible_pixels(cloud: PointCloud, cam: CameraModel):
    proj = project_cloud(cloud, cam)
    row, col = proj.pixel_indices(cam)
    return proj.visible, row, col


def build_teacher(cloud: PointCloud, views, *, eps: float = TEACHER_EPS, workers: int = 1) -> TeacherField:
    """Average the features sampled at each point's projection over the views that see it.

    Parameters
    ----------
    cloud : PointCloud
    views : sequence of (CameraModel, ndarray)
        Camera and its ``C x H x W`` feature map.
    eps : float
        Stabilizer added to the visibility count in the denominator.

    Returns
    -------
    TeacherField
        Rows of points seen by no view are zero and flagged invisible.
    """
    views = list(views)
    channels = {np.shape(fmap)[0] for _, fmap in views}
    if len(channels) > 1:
        raise MismatchedChannels(f"feature maps disagree on channel count: {sorted(channels)}")
    c = channels.pop() if channels else 0
    for cam, fmap in views:
        if np.shape(fmap)[1:] != (cam.height, cam.width):
            raise InvalidInput("feature map size does not match its camera")

    def sample(view):
        cam, fmap = view
        vis, row, col = _visible_pixels(cloud, cam)
        fmap = np.asarray(fmap, dtype=np.float64)
        feats = np.zeros((cloud.n, c))
        feats[vis] = fmap[:, row[vis], col[vis]].T
        return vis, feats

    total = np.zeros((cloud.n, c))
    counts = np.zeros(cloud.n, dtype=np.int64)
    for vis, feats in _map(sample, views, workers):
        total += feats
        counts += vis
    visible = counts > 0
    features = total / (counts + eps)[:, None]
    features[~visible] = 0.0
    return TeacherField(features, visible, counts)


def lift_view_masks(cloud: PointCloud, views, *, workers: int = 1) -> list[LiftedMask]:
    """3D point set of every 2D mask: visible points whose pixel lies in the mask."""
    views = list(views)

    def lift(args):
        v, (cam, masks) = args
        vis, row, col = _visible_pixels(cloud, cam)
        idx = np.flatnonzero(vis)
        out = []
        for k, (label, pixels) in enumerate(masks):
            pixels = np.asarray(pixels, dtype=bool)
            if pixels.shape != (cam.height, cam.width):
                raise InvalidInput("mask size does not match its camera")
            hit = pixels[row[idx], col[idx]]
            out.append(LiftedMask(v, k, label, idx[hit]))
        return out

    per_view = _map(lift, list(enumerate(views)), workers)
    return [m for view in per_view for m in view]


def _merge_lowest_pairs(sets: list[np.ndarray], labels: list[str], n: int, merge_iou: float):
    """Repeatedly union the lexicographically lowest (i, j) pair with equal labels and IoU >= merge_iou."""
    m = len(sets)
    sets = list(sets)
    alive = np.ones(m, dtype=bool)
    codes = {name: i for i, name in enumerate(dict.fromkeys(labels))}
    lab = np.array([codes[x] for x in labels], dtype=np.int64)
    same = lab[:, None] == lab[None, :]
    sizes = np.array([len(s) for s in sets], dtype=np.float64)
    inter = np.zeros((m, m))
    member = np.zeros(n, dtype=bool)
    for i in range(m):
        member[sets[i]] = True
        for k in range(i + 1, m):
            inter[i, k] = inter[k, i] = member[sets[k]].sum()
        member[sets[i]] = False
    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    while True:
        union = sizes[:, None] + sizes[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            iou = np.where(union > 0, inter / union, 0.0)
        ok = upper & same & (iou >= merge_iou) & alive[:, None] & alive[None, :]
        if not ok.any():
            break
        i, j = np.argwhere(ok)[0]
        sets[i] = np.union1d(sets[i], sets[j])
        alive[j] = False
        sizes[i] = len(sets[i])
        member[sets[i]] = True
        for k in np.flatnonzero(alive):
            if k != i:
                inter[i, k] = inter[k, i] = member[sets[k]].sum()
        member[sets[i]] = False
    keep = np.flatnonzero(alive)
    return [sets[i] for i in keep], [labels[i] for i in keep]


def _resolve_overlaps(sets: list[np.ndarray], n: int, min_points: int):
    """Give shared points to the largest claiming group (ties: lowest index), dropping groups that shrink too far."""
    active = [i for i, s in enumerate(sets) if len(s) >= min_points]
    while True:
        order = sorted(active, key=lambda i: (-len(sets[i]), i))
        owner = np.full(n, -1, dtype=np.int64)
        for g in order:
            free = sets[g][owner[sets[g]] == -1]
            owner[free] = g
        counts = np.bincount(owner[owner >= 0], minlength=len(sets))
        survivors = [i for i in active if counts[i] >= min_points]
        if survivors == active:
            return active, owner
        active = survivors


def lift_masks(cloud: PointCloud, views, cfg: MaskMergeConfig = MaskMergeConfig(), *,
               workers: int = 1) -> MaskGroups:
    """Lift per-view masks to 3D and merge them across views into disjoint groups.

    ``views`` is a sequence of ``(CameraModel, masks)`` where ``masks`` is a
    list of ``(label, bool H x W)`` pairs. Lifted masks are visited in order
    of decreasing point count (ties: view index, then mask index).
    """
    lifted = lift_view_masks(cloud, views, workers=workers)
    ordered = sorted((m for m in lifted if len(m.points)),
                     key=lambda m: (-len(m.points), m.view, m.index))
    sets, labels = _merge_lowest_pairs([m.points for m in ordered], [m.label for m in ordered],
                                       cloud.n, cfg.merge_iou)
    active, owner = _resolve_overlaps(sets, cloud.n, cfg.min_mask_points)
    point_mask = np.full(cloud.n, -1, dtype=np.int64)
    groups, group_labels = [], []
    for new_id, g in enumerate(active, start=1):
        members = np.flatnonzero(owner == g)
        point_mask[members] = new_id
        groups.append(members)
        group_labels.append(labels[g])
    return MaskGroups(groups, group_labels, point_mask, lifted)
