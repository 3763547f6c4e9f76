import numpy as np
import pytest

from semcad import synth
from semcad.embedding_net import TrainConfig
from semcad.persist import FormatError
from semcad.pipeline import PipelineBundle, PipelineConfig, StageError, derive_seed, fit_semcad, rho_sweep

FAST = PipelineConfig(seed=1, train=TrainConfig(epochs=2, hidden=(16, 8)), n_clusters=3)


@pytest.fixture(scope="module")
def fitted(small_records):
    return fit_semcad(small_records, FAST)


def test_dimension_chain(fitted):
    bundle, art = fitted
    bundle.check()
    assert bundle.pca.mean.shape[0] == bundle.embedding.width
    assert art.points.shape == (1500, 2)
    assert set(art.timings) == {"preprocess", "embedding", "pca", "gmm", "labeling"}


def test_bytes_round_trip_and_classify(fitted, small_records):
    bundle, _ = fitted
    back = PipelineBundle.from_bytes(bundle.to_bytes())
    assert back.to_bytes() == bundle.to_bytes()
    rows = small_records[:1000]
    assert np.array_equal(back.classify(rows), bundle.classify(rows))
    assert np.array_equal(back.project(rows), bundle.project(rows))


def test_train_self_consistency(fitted, small_records):
    bundle, art = fitted
    clusters = bundle.clusters(small_records)
    assert np.array_equal(clusters, art.clusters)
    y = art.labels
    k = bundle.gmm.n_components
    assert np.array_equal(np.bincount(clusters[y == 1], minlength=k), bundle.labeling.anomaly_counts)


def test_deterministic(small_records, fitted):
    again, _ = fit_semcad(small_records, FAST)
    assert again.to_bytes() == fitted[0].to_bytes()


def test_unknown_values_classify(fitted, small_records):
    bundle, _ = fitted
    from dataclasses import replace

    odd = [replace(r, alarm_type="NEVER", site_code="NEVER", city="NEVER", domain="NEVER", segment_name="NEVER",
                   management_system="NEVER", port_type="NEVER", equipment_type="NEVER") for r in small_records[:5]]
    out = bundle.classify(odd)
    assert out.shape == (5,) and set(out.tolist()) <= {0, 1}
    assert bundle.classify([]).shape == (0,)


def test_feature_selection_stage(small_records):
    from dataclasses import replace

    bundle, art = fit_semcad(small_records, replace(FAST, select_k=4))
    assert len(bundle.encoder.features) == 4
    assert sum(s.selected for s in art.feature_scores) == 4


def test_variance_threshold_stage(small_records):
    from dataclasses import replace

    bundle, _ = fit_semcad(small_records, replace(FAST, variance_threshold=0.5))
    assert bundle.gmm.dim == bundle.pca.n_components >= 1


def test_stage_errors_named(small_records):
    with pytest.raises(StageError, match="^preprocess:"):
        fit_semcad([], FAST)
    normals = [r for r in small_records if r.label == 0][:200]
    with pytest.raises(StageError, match="^embedding:"):
        fit_semcad(normals, FAST)


def test_corrupt_bundle(fitted):
    blob = bytearray(fitted[0].to_bytes())
    blob[0] ^= 1
    with pytest.raises(FormatError):
        PipelineBundle.from_bytes(bytes(blob))


def test_rho_sweep_monotone(fitted, small_records):
    bundle, _ = fitted
    sweep = rho_sweep(bundle, small_records)
    counts = [int(p.sum()) for _, p in sweep]
    assert counts == sorted(counts, reverse=True)


def test_seed_derivation():
    assert derive_seed(42, "gmm") == derive_seed(42, "gmm")
    assert derive_seed(42, "gmm") != derive_seed(42, "embedding")
    assert 0 <= derive_seed(1, "x") < 2**63


def test_config_json_round_trip():
    cfg = PipelineConfig(select_k=3, train=TrainConfig(hidden=(4,)))
    assert PipelineConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError, match="unknown config key"):
        PipelineConfig.from_json({"bogus": 1})
