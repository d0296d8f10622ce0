import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dds.errors import InvalidInput, LengthMismatch
from dds.vote import (VOTE_EPS, PointLabels, VoteTable, assign_semantics, collect_votes, evaluate, propagate)


def test_unanimous_cluster():
    pl = PointLabels.from_lists([["car"]] * 6, names=["car", "road"])
    t = collect_votes(np.zeros(6, np.int64), 1, pl)
    assert t.counts.tolist() == [[6, 0]]
    assert abs(t.ratios[0, 0] - 6 / (6 + VOTE_EPS)) < 1e-15 and 1 - t.ratios[0, 0] < 1e-7
    assert assign_semantics(t) == ["car"]


def test_cluster_without_labels_is_zero_row():
    pl = PointLabels.from_lists([["a"], [], []], names=["a"])
    t = collect_votes(np.array([0, 1, 1]), 2, pl)
    assert t.counts[1].tolist() == [0] and t.ratios[1].tolist() == [0.0]
    assert assign_semantics(t) == ["a", None]


def test_threshold_leaves_cluster_unlabeled():
    t = VoteTable(np.array([[3, 3, 4]]), np.array([[0.3, 0.3, 0.4]]), ["a", "b", "c"], eta=0.5)
    assert assign_semantics(t) == [None]


def test_tie_goes_to_lowest_label():
    t = VoteTable(np.array([[2, 2]]), np.array([[0.5, 0.5]]), ["x", "y"], eta=0.5)
    assert assign_semantics(t) == ["x"]


def test_eta_validated():
    with pytest.raises(InvalidInput):
        assign_semantics(VoteTable(np.ones((1, 1)), np.ones((1, 1)), ["a"], eta=1.5))


def test_vote_counts_triple_loop(rng):
    names = ["a", "b", "c", "d"]
    per_point = [list(rng.choice(names, size=rng.integers(0, 4))) for _ in range(60)]
    clusters = rng.integers(0, 5, 60)
    t = collect_votes(clusters, 5, PointLabels.from_lists(per_point, names))
    for k in range(5):
        for q, name in enumerate(names):
            n = sum(1 for i in range(60) if clusters[i] == k for lab in per_point[i] if lab == name)
            assert t.counts[k, q] == n
    assert np.all(t.ratios.sum(axis=1) <= 1 + 1e-12)


def test_propagate_cases():
    lab = propagate(np.array([0, 1, 1, 2]), ["road", None, "car"])
    assert lab.point_name == ["road", None, None, "car"]
    assert propagate(np.zeros(3, np.int64), ["x"]).point_name == ["x"] * 3


def test_evaluate_identity():
    gt = np.array([0, 0, 1, 2, 2, 2])
    r = evaluate(gt.copy(), gt, "matched")
    assert (r.oAcc, r.mAcc, r.mIoU) == (1.0, 1.0, 1.0)


def test_evaluate_single_cluster_two_classes():
    gt = np.array([0, 0, 1, 1])
    r = evaluate(np.zeros(4, np.int64), gt)
    assert r.oAcc == 0.5 and r.mIoU == pytest.approx(0.25)


def test_evaluate_permutation_invariance(rng):
    gt = rng.integers(0, 4, 200)
    pred = rng.integers(0, 6, 200)
    perm = rng.permutation(6)
    a, b = evaluate(pred, gt), evaluate(perm[pred], gt)
    assert (a.oAcc, a.mAcc, a.mIoU) == (b.oAcc, b.mAcc, b.mIoU)


def test_evaluate_named_mode():
    gt = np.array([0, 0, 1, 1])
    r = evaluate(["road", None, "car", "road"], gt, "named", ["road", "car"])
    assert r.oAcc == 0.5 and r.unlabeled_fraction == 0.25
    assert r.per_class_iou[0] == pytest.approx(1 / 3) and r.per_class_iou[1] == 0.5


def test_evaluate_length_mismatch():
    with pytest.raises(LengthMismatch):
        evaluate([0, 1], [0, 1, 2])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_metric_ranges_and_mean(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 80))
    gt = rng.integers(0, 5, n)
    r = evaluate(rng.integers(0, 7, n), gt)
    for v in (r.oAcc, r.mAcc, r.mIoU, *r.per_class_iou.values()):
        assert 0.0 <= v <= 1.0
    assert r.mIoU == pytest.approx(np.mean(list(r.per_class_iou.values())))
    assert set(r.per_class_iou) == set(np.unique(gt).tolist())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_vote_properties(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 60)), int(rng.integers(1, 6))
    clusters = rng.integers(0, k, n)
    per_point = [list(rng.choice(["a", "b", "c"], size=rng.integers(0, 3))) for _ in range(n)]
    pl = PointLabels.from_lists(per_point, ["a", "b", "c"])
    t = collect_votes(clusters, k, pl)
    perm = rng.permutation(n)
    t2 = collect_votes(clusters[perm], k, PointLabels.from_lists([per_point[i] for i in perm], ["a", "b", "c"]))
    assert np.array_equal(t.counts, t2.counts)
    labelled = [x is not None for x in assign_semantics(VoteTable(t.counts, t.ratios, t.names, 0.3))]
    higher = [x is not None for x in assign_semantics(VoteTable(t.counts, t.ratios, t.names, 0.6))]
    assert all(a or not b for a, b in zip(labelled, higher))


def test_report_json_and_table():
    r = evaluate(np.array([0, 1, 1]), np.array([0, 1, 1]))
    doc = json.loads(r.to_json())
    assert doc["mIoU"] == 1.0 and doc["mode"] == "matched"
    lines = r.to_table("DDS").splitlines()
    assert lines[0].split("|")[0].strip() == "Methods" and "100.0" in lines[2]
    assert len({len(x) for x in lines}) == 1
