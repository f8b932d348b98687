import json

import numpy as np
import pytest

from fuselab.dataset import MixedDataset
from fuselab.errors import DomainError
from fuselab.fusion import (
    SOURCE, HierarchyConfig, HierarchyPipeline, build_strength_dataset, concat, engineered_porosity, fuse,
    predict_tensile, train_hierarchy, train_upstream,
)


def _ds(n, seed, names=("a", "b")):
    r = np.random.default_rng(seed)
    return MixedDataset(r.random((n, len(names))), np.zeros((n, 0), int), r.random(n), names)


def test_engineered_porosity_examples():
    assert engineered_porosity(400.0, 0.0) == 400.0
    assert engineered_porosity(400.0, 0.01) == pytest.approx(404.0201, abs=5e-5)
    gap = engineered_porosity(400.0, 0.02001) - engineered_porosity(400.0, 0.02)
    assert gap > 1e-3
    assert engineered_porosity(401.0, 0.02) > engineered_porosity(400.0, 0.02)


def test_fuse_counts_and_roundtrip():
    a, b = _ds(270, 0), _ds(54, 1)
    f = fuse([("H", a), ("YS", b)])
    assert f.n == 324 and f.cardinalities == (2,)
    back = f.filter_level(SOURCE, "YS")
    np.testing.assert_array_equal(back.X, b.X)
    np.testing.assert_array_equal(back.y, b.y)
    np.testing.assert_array_equal(f.filter_level(SOURCE, "H").X, a.X)


def test_fuse_self_doubles():
    a = _ds(10, 0)
    assert fuse([("x", a), ("y", a)]).n == 20


def test_fuse_schema_conflict_lists_columns():
    with pytest.raises(DomainError, match="c"):
        fuse([("H", _ds(5, 0)), ("YS", _ds(5, 1, ("a", "c")))])


def test_fuse_duplicate_tag():
    with pytest.raises(DomainError):
        fuse([("H", _ds(5, 0)), ("H", _ds(5, 1))])


def test_fuse_associative_with_concat():
    a, b, c = _ds(4, 0), _ds(5, 1), _ds(6, 2)
    f3 = fuse([("A", a), ("B", b), ("C", c)])
    bc = concat([b, c])
    f2 = fuse([("A", a), ("BC", bc)])
    np.testing.assert_array_equal(f3.X, f2.X)
    np.testing.assert_array_equal(f3.y, f2.y)
    np.testing.assert_array_equal(f3.T[:, 0] > 0, f2.T[:, 0] > 0)


def test_strength_dataset_size(campaign):
    cub, ten, _ = campaign
    up = train_upstream(cub, HierarchyConfig().with_overrides(n_starts=1))
    d = build_strength_dataset(*up, cub, ten)
    assert d.n == 324
    assert d.x_names[-2:] == ("h_pred", "ep_pred")


def test_downstream_features_are_predictions(campaign):
    cub, ten, _ = campaign
    up = train_upstream(cub, HierarchyConfig().with_overrides(n_starts=1))
    d = build_strength_dataset(*up, cub, ten)
    measured = np.array([c.hardness for c in cub])
    h_col = d.filter_level(SOURCE, "H").X[:, 4]
    assert not np.allclose(h_col, measured)


def test_cuboid_only_rejected(campaign):
    cub, _, _ = campaign
    with pytest.raises(DomainError, match="tensile"):
        train_hierarchy(cub, [], HierarchyConfig().with_overrides(n_starts=1))


def test_pipeline_self_consistency(pipeline, campaign):
    _, ten, _ = campaign
    pred = predict_tensile(pipeline, [t.params for t in ten])
    y = np.array([t.yield_strength for t in ten])
    # a 2-sd band is a ~95% statement, so check coverage over the training points
    within = np.abs(pred.ys_mean - y) <= 2 * pred.ys_sd
    assert within.mean() >= 0.9
    assert pred.dummy_is_physical is False
    assert pred.dummy_hardness.shape == (len(ten),)


def test_empty_batch(pipeline):
    assert len(predict_tensile(pipeline, [])) == 0


def test_pipeline_serialization_deterministic(pipeline, campaign):
    cub, _, _ = campaign
    doc = json.loads(json.dumps(pipeline.to_dict()))
    assert doc["version"] == "pipeline_v1"
    assert set(doc["stages"]) == {"h", "ep", "ys", "ef"}
    p2 = HierarchyPipeline.from_dict(doc)
    params = [c.params for c in cub[:20]]
    a, b = predict_tensile(pipeline, params), predict_tensile(p2, params)
    np.testing.assert_allclose(a.ys_mean, b.ys_mean, rtol=1e-12)
    np.testing.assert_array_equal(predict_tensile(p2, params).ef_mean, b.ef_mean)


def test_rotation_excluded_by_default(pipeline):
    assert pipeline.gp_h.cat_names == ()
    assert pipeline.gp_ys.cat_names == (SOURCE,)
