"""Desk-scale synthetic scenes standing in for real sensor data.

Objects are sampled as surface points. Visibility downstream is frustum
membership only, so by default points hidden behind a different object in
any view are removed to keep that assumption exact. Each camera renders a label image
with a one-pixel z-buffer over those points; the feature map paints every
object's class archetype (plus Gaussian noise) into its footprint, and the
masks are the eroded footprints labeled with the class name.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInput
from .scene import CameraModel, PointCloud, Scene, SceneView, project_cloud


@dataclass(frozen=True)
class ObjectTemplate:
    """``kind`` is ``box``, ``cylinder`` or ``plane``.

    ``center`` is the center of the base; ``size`` is (sx, sy, sz) for a box,
    (sx, sy) for a plane and (radius, height) for a cylinder.
    """

    kind: str
    center: tuple
    size: tuple
    class_id: int


@dataclass(frozen=True)
class SyntheticSceneSpec:
    objects: list
    class_names: list
    channels: int = 16
    sigma: float = 0.05
    n_cameras: int = 6
    ring_radius: float = 4.0
    ring_height: float = 16.0
    image_width: int = 128
    image_height: int = 96
    focal: float = 80.0
    point_spacing: float = 0.2
    jitter: float = 0.02
    fill_px: int = 3
    drop_occluded: bool = True
    mask_erosion: int = 1
    mask_drop_prob: float = 0.0
    archetypes: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.objects:
            raise InvalidInput("a scene needs at least one object")
        n_cls = len(self.class_names)
        if any(not 0 <= o.class_id < n_cls for o in self.objects):
            raise InvalidInput("object class id out of range")
        if self.archetypes is not None:
            a = np.asarray(self.archetypes, dtype=np.float64)
            if a.shape != (n_cls, self.channels):
                raise InvalidInput("archetypes must be (classes, channels)")
            a = a / np.linalg.norm(a, axis=1, keepdims=True)
            cos = a @ a.T - np.eye(n_cls)
            if n_cls > 1 and cos.max() > 0.5:
                raise InvalidInput("class archetypes must have pairwise cosine <= 0.5")
        elif n_cls > self.channels:
            raise InvalidInput("need at least as many channels as classes for orthogonal archetypes")


def canonical_spec(sigma: float = 0.05, n_cameras: int = 6, **overrides) -> SyntheticSceneSpec:
    """Four objects on the ground: road plane, car, pole and building."""
    objects = [
        ObjectTemplate("plane", (0.0, 0.0, 0.0), (12.0, 12.0), 0),
        ObjectTemplate("box", (-2.5, -1.5, 0.0), (3.6, 1.8, 1.4), 1),
        ObjectTemplate("cylinder", (2.5, 2.5, 0.0), (0.3, 4.0), 2),
        ObjectTemplate("box", (2.5, -3.0, 0.0), (3.0, 2.4, 3.0), 3),
    ]
    return SyntheticSceneSpec(objects, ["road", "car", "pole", "building"], sigma=sigma,
                              n_cameras=n_cameras, **overrides)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(1, int(math.floor((hi - lo) / step + 1e-9)) + 1)
    offset = ((hi - lo) - (n - 1) * step) / 2.0
    return lo + offset + step * np.arange(n)


def _sample_object(obj: ObjectTemplate, step: float) -> np.ndarray:
    cx, cy, cz = obj.center
    if obj.kind == "plane":
        sx, sy = obj.size[:2]
        X, Y = np.meshgrid(_grid(cx - sx / 2, cx + sx / 2, step), _grid(cy - sy / 2, cy + sy / 2, step))
        return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, cz)])
    if obj.kind == "box":
        sx, sy, sz = obj.size
        x0, x1, y0, y1, z1 = cx - sx / 2, cx + sx / 2, cy - sy / 2, cy + sy / 2, cz + sz
        xs, ys, zs = _grid(x0, x1, step), _grid(y0, y1, step), _grid(cz, z1, step)
        faces = []
        X, Y = np.meshgrid(xs, ys)
        faces.append(np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z1)]))
        X, Z = np.meshgrid(xs, zs)
        for y in (y0, y1):
            faces.append(np.column_stack([X.ravel(), np.full(X.size, y), Z.ravel()]))
        Y, Z = np.meshgrid(ys, zs)
        for x in (x0, x1):
            faces.append(np.column_stack([np.full(Y.size, x), Y.ravel(), Z.ravel()]))
        return np.concatenate(faces)
    if obj.kind == "cylinder":
        radius, height = obj.size[:2]
        n_ang = max(6, int(math.ceil(2 * math.pi * radius / step)))
        ang = 2 * math.pi * np.arange(n_ang) / n_ang
        zs = _grid(cz, cz + height, step)
        A, Z = np.meshgrid(ang, zs)
        side = np.column_stack([cx + radius * np.cos(A.ravel()), cy + radius * np.sin(A.ravel()), Z.ravel()])
        cap = [np.array([[cx, cy, cz + height]])]
        for r in _grid(0.0, radius, step)[1:-1]:
            k = max(3, int(math.ceil(2 * math.pi * r / step)))
            a = 2 * math.pi * np.arange(k) / k
            cap.append(np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a), np.full(k, cz + height)]))
        return np.concatenate([side] + cap)
    raise InvalidInput(f"unknown object kind {obj.kind!r}")


def _footprint_mask(obj: ObjectTemplate, xy: np.ndarray, margin: float) -> np.ndarray:
    cx, cy, _ = obj.center
    if obj.kind == "box":
        sx, sy = obj.size[:2]
        return (np.abs(xy[:, 0] - cx) <= sx / 2 + margin) & (np.abs(xy[:, 1] - cy) <= sy / 2 + margin)
    if obj.kind == "cylinder":
        return np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) <= obj.size[0] + margin
    return np.zeros(len(xy), dtype=bool)


def make_archetypes(n_classes: int, channels: int, rng: np.random.Generator) -> np.ndarray:
    """Mutually orthogonal unit vectors, one per class."""
    q, _ = np.linalg.qr(rng.normal(size=(channels, n_classes)))
    return q.T.copy()


def ring_cameras(spec: SyntheticSceneSpec) -> list[CameraModel]:
    cams = []
    for v in range(spec.n_cameras):
        a = 2 * math.pi * v / spec.n_cameras
        eye = (spec.ring_radius * math.cos(a), spec.ring_radius * math.sin(a), spec.ring_height)
        cams.append(CameraModel.look_at(eye, (0.0, 0.0, 0.0), focal=spec.focal,
                                        width=spec.image_width, height=spec.image_height))
    return cams


def _render_labels(points: np.ndarray, owner: np.ndarray, cam: CameraModel, fill_px: int) -> np.ndarray:
    """Object index per pixel (-1 = background).

    Each point lands on its nearest pixel and the closest depth wins, so a
    point's own pixel shows either that point or something in front of it.
    Empty pixels within ``fill_px`` of a hit copy the nearest hit's label.
    """
    proj = project_cloud(PointCloud(points), cam)
    labels = np.full((cam.height, cam.width), -1, dtype=np.int64)
    vis = np.flatnonzero(proj.visible)
    if len(vis) == 0:
        return labels
    row, col = proj.pixel_indices(cam)
    flat = row[vis] * cam.width + col[vis]
    order = np.lexsort((owner[vis], proj.depth[vis], flat))
    _, first = np.unique(flat[order], return_index=True)
    win = order[first]
    labels.ravel()[flat[win]] = owner[vis][win]
    if fill_px > 0:
        empty = labels < 0
        dist, (ri, ci) = ndimage.distance_transform_edt(empty, return_indices=True)
        fill = empty & (dist <= fill_px)
        labels[fill] = labels[ri[fill], ci[fill]]
    return labels


def generate_scene(spec: SyntheticSceneSpec, seed: int = 0) -> Scene:
    """Sample surface points and render per-view features with masks; deterministic given ``seed``.

    Positions and features are rounded to float32 so a scene written to disk
    reads back identically.
    """
    rng = np.random.default_rng(seed)
    archetypes = (np.asarray(spec.archetypes, dtype=np.float64) if spec.archetypes is not None
                  else make_archetypes(len(spec.class_names), spec.channels, rng))
    archetypes = archetypes / np.linalg.norm(archetypes, axis=1, keepdims=True)

    solids = [o for o in spec.objects if o.kind != "plane"]
    chunks, owners = [], []
    for k, obj in enumerate(spec.objects):
        pts = _sample_object(obj, spec.point_spacing)
        if obj.kind == "plane":
            inside = np.zeros(len(pts), dtype=bool)
            for other in solids:
                inside |= _footprint_mask(other, pts[:, :2], spec.point_spacing / 2)
            pts = pts[~inside]
        chunks.append(pts)
        owners.append(np.full(len(pts), k))
    points = np.concatenate(chunks)
    owner = np.concatenate(owners)
    if spec.jitter > 0:
        points = points + rng.uniform(-spec.jitter, spec.jitter, size=points.shape)
    points = points.astype(np.float32).astype(np.float64)
    class_of_object = np.array([o.class_id for o in spec.objects])

    cams = ring_cameras(spec)
    label_images = [_render_labels(points, owner, cam, spec.fill_px) for cam in cams]
    if spec.drop_occluded:
        hidden = np.zeros(len(points), dtype=bool)
        probe = PointCloud(points)
        for cam, labels in zip(cams, label_images):
            proj = project_cloud(probe, cam)
            row, col = proj.pixel_indices(cam)
            hidden |= proj.visible & (labels[row, col] != owner)
        points, owner = points[~hidden], owner[~hidden]
    cloud = PointCloud(points, class_of_object[owner])

    views = []
    for cam, labels in zip(cams, label_images):
        feats = np.zeros((spec.channels, cam.height, cam.width))
        hit = labels >= 0
        feats[:, hit] = archetypes[class_of_object[labels[hit]]].T
        feats += spec.sigma * rng.normal(size=feats.shape)
        feats = feats.astype(np.float32).astype(np.float64)
        masks = []
        for k, obj in enumerate(spec.objects):
            fp = labels == k
            if spec.mask_erosion > 0:
                fp = ndimage.binary_erosion(fp, iterations=spec.mask_erosion)
            drop = spec.mask_drop_prob > 0 and rng.random() < spec.mask_drop_prob
            if fp.any() and not drop:
                masks.append((spec.class_names[obj.class_id], fp))
        views.append(SceneView(cam, feats, masks))
    return Scene(cloud, views, list(spec.class_names))
