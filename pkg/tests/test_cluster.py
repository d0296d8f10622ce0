import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dds.cluster import ClusterCfg, PrimitiveModel, cosine_assign, fit_primitives, kmeans, pseudo_labels, select_channels
from dds.errors import DegenerateDataWarning, InvalidInput
from dds.superpoint import SuperpointPartition


def argmax_holds(H, model, slack=1e-12):
    hn = H / np.linalg.norm(H, axis=1, keepdims=True)
    cn = model.centers / np.linalg.norm(model.centers, axis=1, keepdims=True)
    sims = hn @ cn.T
    chosen = sims[np.arange(len(H)), model.primitive_of_superpoint]
    return bool(np.all(chosen[:, None] >= sims - slack))


def test_select_all_nonzero_variance_channels(rng):
    H = rng.normal(size=(30, 6))
    H[:, 2] = 1.5
    _, mask = select_channels(H, 1.0)
    assert mask.tolist() == [True, True, False, True, True, True]


def test_select_single_dominant_channel(rng):
    H = np.zeros((20, 5))
    H[:, 3] = rng.normal(size=20)
    H_hat, mask = select_channels(H, 0.9)
    assert mask.tolist() == [False, False, False, True, False]
    assert np.array_equal(H_hat, H[:, [3]])


def prefix_oracle(H, ratio):
    var = [float(np.var(H[:, j])) for j in range(H.shape[1])]
    order = sorted(range(len(var)), key=lambda j: (-var[j], j))
    total, acc, keep = sum(var), 0.0, []
    for j in order:
        keep.append(j)
        acc += var[j]
        if acc >= ratio * total:
            break
    return sorted(keep)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ratio=st.floats(0.05, 0.99))
def test_select_matches_prefix_scan(seed, ratio):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(50, 16)) * rng.uniform(0.1, 3, size=16)
    _, mask = select_channels(H, ratio)
    assert np.flatnonzero(mask).tolist() == prefix_oracle(H, ratio)
    var = H.var(axis=0)
    assert var[mask].sum() >= ratio * var.sum() - 1e-12


def test_kmeans_k_equals_rows(rng):
    X = rng.normal(size=(7, 3))
    labels, centers = kmeans(X, 7)
    assert sorted(labels.tolist()) == list(range(7))
    assert np.sum((X - centers[labels]) ** 2) == pytest.approx(0.0, abs=1e-20)


def test_kmeans_two_blobs(rng):
    X = np.vstack([rng.normal(size=(50, 2)) * 0.2, rng.normal(size=(50, 2)) * 0.2 + [10, 10]])
    labels, _ = kmeans(X, 2, seed=3)
    truth = np.repeat([0, 1], 50)
    assert np.array_equal(labels, truth) or np.array_equal(labels, 1 - truth)


def test_kmeans_one_cluster(rng):
    X = rng.normal(size=(25, 4))
    labels, centers = kmeans(X, 1)
    assert (labels == 0).all() and np.allclose(centers[0], X.mean(axis=0))


def test_kmeans_deterministic(rng):
    X = rng.normal(size=(80, 5))
    a, ca = kmeans(X, 6, seed=11)
    b, cb = kmeans(X, 6, seed=11)
    assert np.array_equal(a, b) and np.array_equal(ca, cb)


def test_kmeans_degenerate_splits(rng):
    X = np.repeat(rng.normal(size=(2, 3)), 5, axis=0)
    with pytest.warns(DegenerateDataWarning):
        labels, centers = kmeans(X, 4)
    assert len(np.unique(labels)) == 4 and len(centers) == 4


def test_kmeans_rejects_large_k(rng):
    with pytest.raises(InvalidInput):
        kmeans(rng.normal(size=(3, 2)), 4)


@pytest.mark.filterwarnings("ignore::dds.errors.DegenerateDataWarning")
def test_orthogonal_rows_are_own_primitives():
    H = np.eye(6) * np.arange(1, 7)[:, None]
    model = fit_primitives(H, ClusterCfg(k_primitive=6, k_coarse=3, embed_dims=4))
    assert model.primitive_of_superpoint.tolist() == list(range(6))


def test_two_groups_of_identical_rows(rng):
    a, b = rng.normal(size=4), rng.normal(size=4)
    H = np.array([a, b, a, a, b, b, a])
    model = fit_primitives(H, ClusterCfg(k_primitive=2, k_coarse=2, embed_dims=2))
    labels = model.primitive_of_superpoint
    assert labels.tolist() == [0, 1, 0, 0, 1, 1, 0]
    assert np.allclose(model.centers, [a, b])


def test_random_instance_matches_argmax_oracle(rng):
    H = rng.normal(size=(60, 16))
    model = fit_primitives(H, ClusterCfg(k_primitive=5, k_coarse=8))
    for n in range(60):
        best, best_sim = None, -np.inf
        for p in range(model.k):
            s = H[n] @ model.centers[p] / (np.linalg.norm(H[n]) * np.linalg.norm(model.centers[p]))
            if s > best_sim:
                best, best_sim = p, s
        assert model.primitive_of_superpoint[n] == best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_cosine_argmax_and_determinism(seed):
    rng = np.random.default_rng(seed)
    ns = int(rng.integers(2, 60))
    H = rng.normal(size=(ns, int(rng.integers(2, 12))))
    cfg = ClusterCfg(k_primitive=int(rng.integers(1, min(ns, 8) + 1)), k_coarse=4, seed=int(rng.integers(100)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        a = fit_primitives(H, cfg)
        b = fit_primitives(H, cfg)
    assert argmax_holds(H, a)
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.primitive_of_superpoint, b.primitive_of_superpoint)
    assert sorted(set(a.primitive_of_superpoint.tolist())) == list(range(a.k))


def test_zero_rows_go_to_primitive_zero():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    labels, n_zero = cosine_assign(H, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert labels.tolist() == [1, 0, 0] and n_zero == 1


def test_k_primitive_above_superpoints(rng):
    with pytest.raises(InvalidInput):
        fit_primitives(rng.normal(size=(3, 4)), ClusterCfg(k_primitive=4))


def test_single_superpoint():
    model = fit_primitives(np.array([[1.0, 2.0, 3.0]]), ClusterCfg(k_primitive=1))
    assert model.primitive_of_superpoint.tolist() == [0] and model.k == 1


def test_model_json_roundtrip(tmp_path, rng):
    model = fit_primitives(rng.normal(size=(20, 6)), ClusterCfg(k_primitive=3))
    model.save(tmp_path / "m.json")
    back = PrimitiveModel.load(tmp_path / "m.json")
    assert np.array_equal(back.centers, model.centers)
    assert np.array_equal(back.primitive_of_superpoint, model.primitive_of_superpoint)
    assert np.array_equal(back.channel_mask, model.channel_mask)
    assert set(__import__("json").loads(model.to_json())) == {"channel_mask", "centers", "assignments"}


def test_pseudo_labels_cases(rng):
    model = PrimitiveModel(np.ones((1, 2)), np.array([0]), np.ones(2, bool))
    assert pseudo_labels(model, SuperpointPartition(np.zeros(5, np.int64), 1)).tolist() == [0] * 5
    prim = rng.integers(0, 4, 10)
    model = PrimitiveModel(np.ones((4, 2)), prim, np.ones(2, bool))
    assign = rng.integers(0, 10, 50)
    labels = pseudo_labels(model, SuperpointPartition(assign, 10))
    assert labels.tolist() == [prim[s] for s in assign]
    perm = rng.permutation(50)
    assert np.array_equal(pseudo_labels(model, SuperpointPartition(assign[perm], 10)), labels[perm])
    with pytest.raises(InvalidInput):
        pseudo_labels(model, SuperpointPartition(assign, 11))
