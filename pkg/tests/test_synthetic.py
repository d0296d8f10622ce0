import numpy as np
import pytest

from dds.errors import InvalidInput
from dds.synthetic import ObjectTemplate, SyntheticSceneSpec, canonical_spec, generate_scene
from dds.teacher import build_teacher, lift_view_masks


def test_noiseless_single_object_teacher_equals_archetype():
    arche = np.eye(4)
    spec = SyntheticSceneSpec([ObjectTemplate("box", (0, 0, 0), (2, 2, 1), 1)], ["ground", "thing"],
                              channels=4, sigma=0.0, n_cameras=1, archetypes=arche[:2])
    scene = generate_scene(spec, seed=5)
    t = build_teacher(scene.cloud, scene.feature_views())
    assert t.visible.any()
    assert np.max(np.abs(t.features[t.visible] - arche[1])) < 1e-6


def test_two_disjoint_objects_give_disjoint_lifted_masks():
    spec = SyntheticSceneSpec([ObjectTemplate("box", (-2, 0, 0), (1, 1, 1), 0),
                               ObjectTemplate("cylinder", (2, 0, 0), (0.4, 2), 1)], ["a", "b"], n_cameras=3)
    scene = generate_scene(spec, seed=1)
    lifted = lift_view_masks(scene.cloud, scene.mask_views())
    for v in range(3):
        sets = [set(m.points.tolist()) for m in lifted if m.view == v]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                assert not sets[i] & sets[j]
    # masks only cover points of their own class
    for m in lifted:
        assert set(scene.cloud.gt_class[m.points].tolist()) <= {spec.class_names.index(m.label)}


def test_deterministic_given_seed():
    a = generate_scene(canonical_spec(n_cameras=2), seed=7)
    b = generate_scene(canonical_spec(n_cameras=2), seed=7)
    assert np.array_equal(a.cloud.positions, b.cloud.positions)
    for va, vb in zip(a.views, b.views):
        assert np.array_equal(va.features, vb.features)


def test_archetype_separation_enforced():
    with pytest.raises(InvalidInput):
        SyntheticSceneSpec([ObjectTemplate("plane", (0, 0, 0), (1, 1), 0)], ["a", "b"], channels=2,
                           archetypes=np.array([[1.0, 0.0], [1.0, 0.1]]))
    with pytest.raises(InvalidInput):
        SyntheticSceneSpec([], ["a"])


def test_canonical_scene_shape(canonical_scene):
    assert canonical_scene.class_names == ["road", "car", "pole", "building"]
    assert len(canonical_scene.views) == 6
    assert set(np.unique(canonical_scene.cloud.gt_class).tolist()) == {0, 1, 2, 3}
