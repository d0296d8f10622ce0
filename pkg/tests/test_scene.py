import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dds.errors import InvalidInput
from dds.scene import CameraModel, PointCloud, project_cloud, project_point


def make_cam(R=np.eye(3), t=np.zeros(3), f=100.0, w=64, h=48, cx=32.0, cy=24.0):
    E = np.eye(4)
    E[:3, :3], E[:3, 3] = R, t
    return CameraModel(np.array([[f, 0, cx], [0, f, cy], [0, 0, 1]]), E, w, h)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def homogeneous_oracle(p, cam):
    # independent path: full 3x4 projection matrix on a homogeneous point
    P = cam.intrinsics @ cam.extrinsics[:3]
    x = P @ np.append(p, 1.0)
    depth = (cam.extrinsics @ np.append(p, 1.0))[2]
    return x[:2] / x[2], depth


def test_optical_axis_hits_principal_point():
    cam = make_cam()
    pr = project_point([0, 0, 2.0], cam)
    assert np.allclose(pr.pixel, [32.0, 24.0])
    assert pr.depth == 2.0 and pr.visible


def test_behind_camera_is_invisible():
    pr = project_point([0, 0, -1.0], make_cam())
    assert not pr.visible
    assert not project_point([0, 0, 0.0], make_cam()).visible


def test_out_of_bounds_pixel_returned_but_invisible():
    pr = project_point([10.0, 0, 1.0], make_cam())
    assert not pr.visible
    assert pr.pixel[0] > 64


def test_random_pairs_match_homogeneous_oracle(rng):
    for _ in range(200):
        cam = make_cam(random_rotation(rng), rng.normal(size=3), f=rng.uniform(20, 200))
        p = rng.normal(size=3) * 3
        pr = project_point(p, cam)
        px, depth = homogeneous_oracle(p, cam)
        assert np.allclose(pr.pixel, px, atol=1e-9, rtol=1e-9)
        assert abs(pr.depth - depth) < 1e-9
        inside = depth > 0 and 0 <= px[0] < 64 and 0 <= px[1] < 48
        assert pr.visible == inside


def test_project_cloud_matches_per_point(rng):
    cam = make_cam(random_rotation(rng), np.array([0, 0, 5.0]))
    cloud = PointCloud(rng.normal(size=(100, 3)))
    batch = project_cloud(cloud, cam)
    for i in range(cloud.n):
        one = project_point(cloud.positions[i], cam)
        assert np.array_equal(batch[i].pixel, one.pixel)
        assert batch[i].depth == one.depth and batch[i].visible == one.visible


def test_all_behind_camera():
    cloud = PointCloud(np.array([[0, 0, -1.0], [1, 1, -3.0]]))
    assert not project_cloud(cloud, make_cam()).visible.any()


def test_single_point_cloud():
    cam = make_cam()
    batch = project_cloud(PointCloud(np.array([[0.1, 0.2, 3.0]])), cam)
    assert len(batch) == 1
    assert np.array_equal(batch[0].pixel, project_point([0.1, 0.2, 3.0], cam).pixel)


def test_visible_pixels_index_inside_image(rng):
    cam = make_cam()
    cloud = PointCloud(rng.uniform(-2, 2, size=(2000, 3)) + [0, 0, 2.5])
    proj = project_cloud(cloud, cam)
    row, col = proj.pixel_indices(cam)
    v = proj.visible
    assert v.any()
    assert (row[v] >= 0).all() and (row[v] < cam.height).all()
    assert (col[v] >= 0).all() and (col[v] < cam.width).all()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rigid_transform_consistency(seed):
    rng = np.random.default_rng(seed)
    cam = make_cam(random_rotation(rng), rng.normal(size=3))
    p = rng.normal(size=3) * 2
    G = np.eye(4)
    G[:3, :3], G[:3, 3] = random_rotation(rng), rng.normal(size=3)
    moved_cam = CameraModel(cam.intrinsics, cam.extrinsics @ np.linalg.inv(G), cam.width, cam.height)
    a = project_point(p, cam)
    b = project_point((G @ np.append(p, 1.0))[:3], moved_cam)
    assert np.allclose(a.pixel, b.pixel, atol=1e-9 * max(1.0, np.abs(a.pixel).max()))
    assert abs(a.depth - b.depth) < 1e-9
    assert a.visible == b.visible or abs(a.depth) < 1e-9


def test_camera_validation():
    with pytest.raises(InvalidInput):
        make_cam(f=-1.0)
    with pytest.raises(InvalidInput):
        make_cam(R=np.diag([1.0, 1.0, 1.1]))


def test_cloud_validation():
    with pytest.raises(InvalidInput):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(InvalidInput):
        PointCloud(np.array([[np.nan, 0, 0]]))
    with pytest.raises(InvalidInput):
        PointCloud(np.zeros((3, 3)), np.zeros(2))


def test_look_at_centers_target():
    cam = CameraModel.look_at([3.0, -2.0, 5.0], [0.5, 0.5, 0.0], focal=50, width=41, height=31)
    pr = project_point([0.5, 0.5, 0.0], cam)
    assert np.allclose(pr.pixel, [20.0, 15.0]) and pr.visible
