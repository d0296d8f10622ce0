"""Binary and JSON file formats used between pipeline stages.

All binary layouts are little-endian with no padding:

* ``DDSP`` point cloud: magic, u32 version, u64 N, u8 has_gt, N*3 f32
  positions, then N u16 class ids when has_gt is set.
* ``DDSF`` feature map: magic, u32 C, u32 H, u32 W, then C*H*W f32.
* ``DDSS`` superpoint partition: magic, u64 N, u32 N_s, N u32 assignments.
* ``DDST`` teacher field: magic, u64 N, u32 C, N u8 visible, N u32 view
  counts, N*C f64 features.

Masks are stored per view as a JSON list of ``{"label", "rle"}`` where
``rle`` is a flat list ``[start0, length0, start1, length1, ...]`` of
0-based offsets into the row-major pixel order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .scene import CameraModel, PointCloud

POINTS_VERSION = 1


def _read_exact(buf: bytes, offset: int, size: int, what: str) -> bytes:
    chunk = buf[offset:offset + size]
    if len(chunk) != size:
        raise FormatError(f"truncated {what}")
    return chunk


def _check_magic(buf: bytes, magic: bytes):
    if buf[:4] != magic:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {magic!r}")


# -- point clouds -------------------------------------------------------------

def write_points(path, cloud: PointCloud) -> None:
    has_gt = cloud.gt_class is not None
    header = b"DDSP" + struct.pack("<IQB", POINTS_VERSION, cloud.n, int(has_gt))
    body = cloud.positions.astype("<f4").tobytes()
    if has_gt:
        if cloud.gt_class.min() < 0 or cloud.gt_class.max() > 0xFFFF:
            raise FormatError("class ids must fit in u16")
        body += cloud.gt_class.astype("<u2").tobytes()
    Path(path).write_bytes(header + body)


def read_points(path) -> PointCloud:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"DDSP")
    version, n, has_gt = struct.unpack("<IQB", _read_exact(buf, 4, 13, "DDSP header"))
    if version != POINTS_VERSION:
        raise FormatError(f"unsupported DDSP version {version}")
    off = 17
    pos = np.frombuffer(_read_exact(buf, off, 12 * n, "positions"), dtype="<f4")
    off += 12 * n
    gt = None
    if has_gt:
        gt = np.frombuffer(_read_exact(buf, off, 2 * n, "class ids"), dtype="<u2").astype(np.int64)
        off += 2 * n
    if off != len(buf):
        raise FormatError("trailing bytes after DDSP payload")
    return PointCloud(pos.reshape(n, 3).astype(np.float64), gt)


# -- cameras ------------------------------------------------------------------

def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "intrinsics": [float(x) for x in cam.intrinsics.ravel()],
        "extrinsics": [float(x) for x in cam.extrinsics.ravel()],
        "width": cam.width,
        "height": cam.height,
    }


def camera_from_dict(doc: dict) -> CameraModel:
    try:
        K, E = doc["intrinsics"], doc["extrinsics"]
        if len(K) != 9 or len(E) != 16:
            raise FormatError("camera needs 9 intrinsic and 16 extrinsic floats")
        return CameraModel(np.array(K, float), np.array(E, float), int(doc["width"]), int(doc["height"]))
    except KeyError as exc:
        raise FormatError(f"camera document missing {exc}") from None


def write_camera(path, cam: CameraModel) -> None:
    Path(path).write_text(json.dumps(camera_to_dict(cam), indent=1) + "\n")


def read_camera(path) -> CameraModel:
    return camera_from_dict(json.loads(Path(path).read_text()))


# -- feature maps -------------------------------------------------------------

def write_features(path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 3:
        raise FormatError("feature map must be C x H x W")
    c, h, w = values.shape
    Path(path).write_bytes(b"DDSF" + struct.pack("<III", c, h, w) + values.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"DDSF")
    c, h, w = struct.unpack("<III", _read_exact(buf, 4, 12, "DDSF header"))
    size = 4 * c * h * w
    if len(buf) != 16 + size:
        raise FormatError("DDSF payload size does not match header")
    return np.frombuffer(buf[16:], dtype="<f4").reshape(c, h, w).astype(np.float64)


# -- masks --------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> list[int]:
    """Run-length encode a boolean H x W mask in row-major order."""
    flat = np.asarray(mask, dtype=bool).ravel()
    padded = np.concatenate([[False], flat, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[0::2], edges[1::2]
    out = np.empty(2 * len(starts), dtype=np.int64)
    out[0::2] = starts
    out[1::2] = ends - starts
    return out.tolist()


def rle_decode(rle, height: int, width: int) -> np.ndarray:
    rle = np.asarray(rle, dtype=np.int64)
    if rle.size % 2:
        raise FormatError("RLE needs an even number of entries")
    flat = np.zeros(height * width, dtype=bool)
    for start, length in zip(rle[0::2].tolist(), rle[1::2].tolist()):
        if start < 0 or length < 0 or start + length > flat.size:
            raise FormatError("RLE run outside the image")
        flat[start:start + length] = True
    return flat.reshape(height, width)


def write_masks(path, masks) -> None:
    """``masks``: iterable of ``(label, bool H x W array)``."""
    doc = [{"label": label, "rle": rle_encode(m)} for label, m in masks]
    Path(path).write_text(json.dumps(doc) + "\n")


def read_masks(path, height: int, width: int) -> list[tuple[str, np.ndarray]]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise FormatError("mask file must hold a JSON list")
    out = []
    for entry in doc:
        label = entry.get("label")
        if not isinstance(label, str) or not label:
            raise FormatError("mask label must be a non-empty string")
        out.append((label, rle_decode(entry["rle"], height, width)))
    return out


# -- partitions ---------------------------------------------------------------

def write_partition(path, assignment: np.ndarray, n_superpoints: int) -> None:
    assignment = np.asarray(assignment)
    header = b"DDSS" + struct.pack("<QI", assignment.shape[0], n_superpoints)
    Path(path).write_bytes(header + assignment.astype("<u4").tobytes())


def read_partition(path) -> tuple[np.ndarray, int]:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"DDSS")
    n, ns = struct.unpack("<QI", _read_exact(buf, 4, 12, "DDSS header"))
    if len(buf) != 16 + 4 * n:
        raise FormatError("DDSS payload size does not match header")
    assignment = np.frombuffer(buf[16:], dtype="<u4").astype(np.int64)
    if n and assignment.max() >= ns:
        raise FormatError("assignment exceeds superpoint count")
    return assignment, ns


# -- teacher fields -----------------------------------------------------------

def write_teacher(path, features: np.ndarray, visible: np.ndarray, view_counts: np.ndarray) -> None:
    n, c = features.shape
    parts = [
        b"DDST",
        struct.pack("<QI", n, c),
        np.asarray(visible, dtype="u1").tobytes(),
        np.asarray(view_counts).astype("<u4").tobytes(),
        np.asarray(features).astype("<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_teacher(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"DDST")
    n, c = struct.unpack("<QI", _read_exact(buf, 4, 12, "DDST header"))
    if len(buf) != 16 + n + 4 * n + 8 * n * c:
        raise FormatError("DDST payload size does not match header")
    off = 16
    visible = np.frombuffer(buf[off:off + n], dtype="u1").astype(bool)
    off += n
    counts = np.frombuffer(buf[off:off + 4 * n], dtype="<u4").astype(np.int64)
    off += 4 * n
    feats = np.frombuffer(buf[off:], dtype="<f8").reshape(n, c).copy()
    return feats, visible, counts


# -- scene directories --------------------------------------------------------

def save_scene(directory, scene) -> None:
    """Write a scene as ``scene.json`` plus one camera/feature/mask file triple per view."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_points(d / "cloud.ddsp", scene.cloud)
    entries = []
    for v, view in enumerate(scene.views):
        stem = f"view_{v:03d}"
        write_camera(d / f"{stem}.json", view.camera)
        write_features(d / f"{stem}.ddsf", view.features)
        write_masks(d / f"{stem}.masks.json", view.masks)
        entries.append({"camera": f"{stem}.json", "features": f"{stem}.ddsf", "masks": f"{stem}.masks.json"})
    doc = {"points": "cloud.ddsp", "class_names": list(scene.class_names), "views": entries}
    (d / "scene.json").write_text(json.dumps(doc, indent=1) + "\n")


def load_scene(directory):
    from .scene import Scene, SceneView

    d = Path(directory)
    try:
        doc = json.loads((d / "scene.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"no scene.json in {d}") from None
    cloud = read_points(d / doc["points"])
    views = []
    for entry in doc["views"]:
        cam = read_camera(d / entry["camera"])
        feats = read_features(d / entry["features"])
        masks = read_masks(d / entry["masks"], cam.height, cam.width)
        views.append(SceneView(cam, feats, masks))
    return Scene(cloud, views, list(doc.get("class_names", [])))
