"""Point clouds and pinhole cameras with 3D-to-pixel projection.

Camera frame follows the usual vision convention: x right, y down, z
forward. Visibility is frustum membership only; there is no z-buffer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray
    gt_class: np.ndarray | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise InvalidInput(f"positions must be (N, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise InvalidInput("point cloud needs at least one point")
        if not np.all(np.isfinite(pos)):
            raise InvalidInput("positions contain non-finite values")
        object.__setattr__(self, "positions", pos)
        if self.gt_class is not None:
            gt = np.asarray(self.gt_class, dtype=np.int64)
            if gt.shape != (pos.shape[0],):
                raise InvalidInput("gt_class must have one entry per point")
            object.__setattr__(self, "gt_class", gt)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera.

    ``extrinsics`` maps world coordinates to camera coordinates
    (``x_cam = R @ x_world + t``).
    """

    intrinsics: np.ndarray
    extrinsics: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.array(self.intrinsics, dtype=np.float64).reshape(3, 3)
        E = np.array(self.extrinsics, dtype=np.float64).reshape(4, 4)
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise InvalidInput("focal lengths must be positive")
        R = E[:3, :3]
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6:
            raise InvalidInput("extrinsic rotation block is not orthonormal")
        if not np.allclose(E[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidInput("extrinsics bottom row must be [0, 0, 0, 1]")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidInput("image size must be positive")
        K.setflags(write=False)
        E.setflags(write=False)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "extrinsics", E)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsics[:3, 3]

    @classmethod
    def look_at(cls, eye, target, *, focal: float, width: int, height: int,
                up=(0.0, 0.0, 1.0)) -> "CameraModel":
        """Camera at ``eye`` looking at ``target`` with the principal point at the image center."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(fwd, [0.0, 1.0, 0.0])
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        E = np.eye(4)
        E[:3, :3] = R
        E[:3, 3] = -R @ eye
        K = np.array([[focal, 0.0, (width - 1) / 2.0],
                      [0.0, focal, (height - 1) / 2.0],
                      [0.0, 0.0, 1.0]])
        return cls(K, E, width, height)


@dataclass(frozen=True)
class Projection:
    pixel: np.ndarray
    depth: float
    visible: bool


@dataclass(frozen=True)
class Projections:
    """Batched projections: ``pixels`` (N, 2), ``depth`` (N,), ``visible`` (N,)."""

    pixels: np.ndarray
    depth: np.ndarray
    visible: np.ndarray

    def __len__(self) -> int:
        return self.depth.shape[0]

    def __getitem__(self, i: int) -> Projection:
        return Projection(self.pixels[i].copy(), float(self.depth[i]), bool(self.visible[i]))

    def pixel_indices(self, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-pixel (row, col) for every point; only meaningful where visible.

        Pixel centers sit at integer coordinates. Rounding is clipped so a
        visible point always indexes inside the image.
        """
        with np.errstate(invalid="ignore"):
            px = np.nan_to_num(self.pixels, nan=-1.0, posinf=-1.0, neginf=-1.0)
            col = np.clip(np.floor(px[:, 0] + 0.5), 0, cam.width - 1).astype(np.int64)
            row = np.clip(np.floor(px[:, 1] + 0.5), 0, cam.height - 1).astype(np.int64)
        return row, col


def _project(points: np.ndarray, cam: CameraModel):
    # explicit per-coordinate sums: a matmul may round differently with the
    # batch size, which would break exact batch/single agreement
    R, t, K = cam.rotation, cam.translation, cam.intrinsics
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    cam_pts = np.stack([R[r, 0] * x + R[r, 1] * y + R[r, 2] * z + t[r] for r in range(3)], axis=1)
    depth = cam_pts[:, 2]
    cx, cy, cz = cam_pts[:, 0], cam_pts[:, 1], cam_pts[:, 2]
    uvw = np.stack([K[r, 0] * cx + K[r, 1] * cy + K[r, 2] * cz for r in range(3)], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = uvw[:, :2] / uvw[:, 2:3]
    u, v = pixels[:, 0], pixels[:, 1]
    visible = (depth > 0) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return pixels, depth, visible


def project_point(p, cam: CameraModel) -> Projection:
    p = np.asarray(p, dtype=np.float64).reshape(1, 3)
    if not np.all(np.isfinite(p)):
        raise InvalidInput("point must be finite")
    pixels, depth, visible = _project(p, cam)
    return Projection(pixels[0], float(depth[0]), bool(visible[0]))


def project_cloud(cloud: PointCloud, cam: CameraModel) -> Projections:
    pixels, depth, visible = _project(cloud.positions, cam)
    return Projections(pixels, depth, visible)


@dataclass(frozen=True)
class SceneView:
    camera: CameraModel
    features: np.ndarray
    masks: list


@dataclass(frozen=True)
class Scene:
    cloud: PointCloud
    views: list
    class_names: list

    def feature_views(self):
        return [(v.camera, v.features) for v in self.views]

    def mask_views(self):
        return [(v.camera, v.masks) for v in self.views]
