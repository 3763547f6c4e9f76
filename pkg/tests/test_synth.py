import math

import numpy as np
import pytest

from semcad import synth
from semcad.data_model import fit_encoder, transform, write_csv
from semcad.feature_selection import chi_square, contingency_table, theils_u
from semcad.synth import SynthConfig, SynthConfigError


def test_default_quota_exact():
    recs = synth.generate(SynthConfig())
    assert len(recs) == 20_000
    assert sum(r.label for r in recs) == 600
    times = [r.report_time for r in recs]
    assert times == sorted(times)


def test_byte_identical_csv(tmp_path):
    cfg = SynthConfig(n_rows=500, seed=9)
    write_csv(synth.generate(cfg), tmp_path / "a.csv")
    write_csv(synth.generate(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def _signal(strength, field="alarm_type", seed=5):
    recs = synth.generate(SynthConfig(n_rows=6000, strength=strength, seed=seed))
    enc = fit_encoder(recs)
    data = transform(recs, enc)
    j = enc.features.index(field)
    table = contingency_table(data.codes[:, j], data.labels)
    return table


@pytest.mark.parametrize("field", synth.SIGNATURE_FIELDS)
def test_strength_zero_has_no_planted_signal(field):
    stat, dof = chi_square(_signal(0.0, field))
    # within five standard deviations of the null mean
    assert stat < dof + 5 * math.sqrt(2 * dof)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_strength_raises_uncertainty_coefficient(seed):
    assert theils_u(_signal(0.9, seed=seed)) > theils_u(_signal(0.0, seed=seed))


def test_full_strength_single_signature():
    recs = synth.generate(SynthConfig(n_rows=2000, n_signatures=1, strength=1.0, seed=4))
    sigs = {tuple(getattr(r, f) for f in synth.SIGNATURE_FIELDS) for r in recs if r.label}
    assert len(sigs) == 1


def test_invalid_configs():
    for bad in (dict(n_rows=0), dict(anomaly_rate=0.0), dict(strength=1.5), dict(n_signatures=0),
                dict(end="2019-01-01T00:00:00Z"), dict(cardinalities={"severity": 9})):
        with pytest.raises(SynthConfigError):
            synth.generate(SynthConfig.from_json(bad) if "cardinalities" in bad else SynthConfig(**bad))
    with pytest.raises(SynthConfigError, match="unknown config key"):
        SynthConfig.from_json({"rows": 5})


def test_config_json_round_trip(tmp_path):
    cfg = SynthConfig(n_rows=100, cardinalities={**synth.DEFAULT_CARDINALITIES, "city": 5})
    p = tmp_path / "c.json"
    import json

    p.write_text(json.dumps(cfg.to_json()))
    assert SynthConfig.load(p) == cfg


def test_value_names():
    assert synth.value_names("severity", 6)[0] == "cleared"
    assert synth.value_names("severity", 4) == ["warning", "minor", "major", "critical"]
    assert synth.value_names("city", 111)[0] == "CITY-001"
