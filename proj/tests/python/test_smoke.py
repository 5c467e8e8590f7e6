import math

import pytest

import cpfl


def small_config(seed=1):
    c = cpfl.SceneConfig()
    c.num_points = 3000
    c.num_db_images = 40
    c.num_queries = 3
    c.cluster_count = 300
    c.max_query_features = 600
    c.seed = seed
    return c


@pytest.fixture(scope="module")
def scene():
    return cpfl.synthesize(small_config(), vocabulary_size=64)


def test_weight_and_ratio():
    assert cpfl.gaussian_weight(8) == 4.0 * math.exp(-0.25)
    assert cpfl.gaussian_weight(20) == 0.0
    t_image, t_model, ratio = cpfl.bilateral_ratio_test(6, [6], [6, 12, 18])
    assert t_model == pytest.approx(2.0)
    assert ratio == pytest.approx(2.0)


def test_localize_and_evaluate(scene):
    results = cpfl.localize(scene, seed=2)
    assert len(results) == scene.num_queries
    assert sum(r["status"] == "localized" for r in results) >= 2
    report = cpfl.evaluate(scene, seed=2)
    assert report["queries"] == 3
    assert report["localized"] >= 2
    assert results == cpfl.localize(scene, seed=2, threads=2)


def test_ablation_switches(scene):
    p = cpfl.PipelineParams()
    p.quality_aware_reconfiguration = False
    p.principal_focal = False
    assert len(cpfl.localize(scene, p)) == scene.num_queries
    p.alpha = -1.0
    with pytest.raises(ValueError):
        cpfl.localize(scene, p)


def test_model_round_trip(scene, tmp_path):
    model = scene.model
    report = model.memory_report()
    assert report["signature_bytes_per_entry"] == 8
    assert report["entry_reduction"] >= 8.0
    path = str(tmp_path / "model.cpfl")
    model.save(path)
    assert cpfl.load_model(path).to_bytes() == model.to_bytes()
    with pytest.raises(ValueError):
        (tmp_path / "bad.cpfl").write_bytes(b"nope")
        cpfl.load_model(str(tmp_path / "bad.cpfl"))
