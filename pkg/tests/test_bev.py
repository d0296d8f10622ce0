import numpy as np
from PIL import Image

from dds.bev import BACKGROUND, PALETTE, UNLABELED, export_bev, rasterize


def colors(path):
    img = np.asarray(Image.open(path).convert("RGB"))
    flat = img.reshape(-1, 3)
    uniq, counts = np.unique(flat, axis=0, return_counts=True)
    return {tuple(u): int(c) for u, c in zip(uniq, counts)}, img


def test_empty_label_set_is_background(tmp_path):
    export_bev(np.zeros((0, 3)), [], tmp_path / "e.png")
    c, _ = colors(tmp_path / "e.png")
    assert list(c) == [tuple(BACKGROUND)]


def test_single_class_footprint(tmp_path, rng):
    pos = np.stack(np.meshgrid(np.arange(0, 2, 0.1), np.arange(0, 1, 0.1), indexing="ij"), -1).reshape(-1, 2)
    pos = np.hstack([pos + 0.05, np.zeros((len(pos), 1))])
    export_bev(pos, np.zeros(len(pos), np.int64), tmp_path / "s.png", resolution=0.1)
    c, img = colors(tmp_path / "s.png")
    assert list(c) == [tuple(PALETTE[0])]
    assert img.shape[:2] == (10, 20)


def test_checkerboard_proportions(tmp_path):
    # 4x4 squares of 0.5 m sampled at the raster resolution, plus jitter
    pos, lab = [], []
    res = 0.1
    for i in range(4):
        for j in range(4):
            cls = (i + j) % 2
            xs = np.arange(i * 0.5, (i + 1) * 0.5 - 1e-9, res) + res / 2
            ys = np.arange(j * 0.5, (j + 1) * 0.5 - 1e-9, res) + res / 2
            g = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
            pos.append(np.hstack([g, np.zeros((len(g), 1))]))
            lab.append(np.full(len(g), cls))
    pos, lab = np.vstack(pos), np.concatenate(lab)
    pos[:, :2] += np.random.default_rng(0).uniform(-0.02, 0.02, size=(len(pos), 2))
    export_bev(pos, lab, tmp_path / "c.png", resolution=res)
    c, _ = colors(tmp_path / "c.png")
    c.pop(tuple(BACKGROUND), None)
    total = sum(c.values())
    for k in (0, 1):
        assert abs(c.get(tuple(PALETTE[k]), 0) / total - np.mean(lab == k)) <= 0.02


def test_highest_point_wins_and_names(tmp_path):
    pos = np.array([[0.0, 0.0, 0.0], [0.01, 0.01, 5.0], [1.0, 1.0, 0.0]])
    r = rasterize(pos, np.array([0, 1, -1]), 0.5)
    assert r[-1, 0] == 1 and r[0, -1] == -1
    export_bev(pos, ["road", "car", None], tmp_path / "n.png", resolution=0.5, class_names=["road", "car"])
    c, _ = colors(tmp_path / "n.png")
    assert tuple(UNLABELED) in c and tuple(PALETTE[1]) in c and tuple(PALETTE[0]) not in c


def test_deterministic_bytes(tmp_path, rng):
    pos = rng.uniform(0, 3, size=(300, 3))
    lab = rng.integers(0, 5, 300)
    export_bev(pos, lab, tmp_path / "a.png")
    export_bev(pos, lab, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
