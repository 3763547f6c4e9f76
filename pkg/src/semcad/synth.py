"""Seeded synthetic alarm logs with planted fault signatures.

Normal rows draw every categorical field independently from a Zipf-skewed
background.  Each fault row picks one of ``n_signatures`` signatures, a fixed
(alarm_type, equipment_type, severity) combination, and takes each signature
field with probability ``strength`` (background otherwise).  A fault is thus
recognisable only from the combination of fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from semcad.data_model import (
    CATEGORICAL_FIELDS,
    DEFAULT_SEVERITY_SCALE,
    AlarmRecord,
    parse_timestamp,
)

# Distinct values per field; severity plus the Table-1-style attribute ranges.
DEFAULT_CARDINALITIES = {
    "severity": 6,
    "alarm_type": 114,
    "site_code": 441,
    "city": 111,
    "domain": 9,
    "segment_name": 405,
    "management_system": 12,
    "port_type": 12,
    "equipment_type": 18,
}

SIGNATURE_FIELDS = ("alarm_type", "equipment_type", "severity")

_PREFIX = {
    "alarm_type": "ALM",
    "site_code": "SITE",
    "city": "CITY",
    "domain": "DOM",
    "segment_name": "SEG",
    "management_system": "NMS",
    "port_type": "PORT",
    "equipment_type": "EQ",
}


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 20_000
    anomaly_rate: float = 0.03
    cardinalities: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_CARDINALITIES))
    n_signatures: int = 4
    strength: float = 0.95
    zipf_exponent: float = 1.1
    seed: int = 42
    start: str = "2020-08-08T00:00:00Z"
    end: str = "2021-01-20T23:59:59Z"

    def validate(self) -> None:
        if self.n_rows < 1:
            raise SynthConfigError("n_rows must be positive")
        if not 0.0 < self.anomaly_rate < 0.5:
            raise SynthConfigError("anomaly_rate must lie in (0, 0.5)")
        if not 0.0 <= self.strength <= 1.0:
            raise SynthConfigError("strength must lie in [0, 1]")
        if self.n_signatures < 1:
            raise SynthConfigError("n_signatures must be at least 1")
        if self.zipf_exponent < 0:
            raise SynthConfigError("zipf_exponent must be non-negative")
        missing = set(CATEGORICAL_FIELDS) - set(self.cardinalities)
        if missing:
            raise SynthConfigError(f"missing cardinalities for {', '.join(sorted(missing))}")
        for name, card in self.cardinalities.items():
            if name not in CATEGORICAL_FIELDS:
                raise SynthConfigError(f"unknown field {name!r}")
            if card < 2:
                raise SynthConfigError(f"cardinality of {name} must be at least 2")
        if self.cardinalities["severity"] > len(DEFAULT_SEVERITY_SCALE):
            raise SynthConfigError(f"severity cardinality is at most {len(DEFAULT_SEVERITY_SCALE)}")
        try:
            if parse_timestamp(self.end) <= parse_timestamp(self.start):
                raise SynthConfigError("end must be after start")
        except ValueError as exc:
            if isinstance(exc, SynthConfigError):
                raise
            raise SynthConfigError(f"bad time window: {exc}") from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d["cardinalities"] = dict(self.cardinalities)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "cardinalities" in d:
            cards = dict(DEFAULT_CARDINALITIES)
            cards.update(d["cardinalities"])
            d["cardinalities"] = cards
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def value_names(fieldname: str, card: int) -> list[str]:
    if fieldname == "severity":
        # the top `card` levels of the intensity scale
        return list(DEFAULT_SEVERITY_SCALE[len(DEFAULT_SEVERITY_SCALE) - card :])
    width = len(str(card))
    return [f"{_PREFIX[fieldname]}-{i:0{width}d}" for i in range(1, card + 1)]


def _zipf_probs(card: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Zipf weights assigned to values through a seeded random popularity ranking."""
    weights = 1.0 / np.arange(1, card + 1) ** exponent
    probs = np.empty(card)
    probs[rng.permutation(card)] = weights / weights.sum()
    return probs


def _pick_signatures(card: int, n_sig: int, rng: np.random.Generator) -> np.ndarray:
    """Signature values, uniform over the field's values; distinct while the field allows."""
    return rng.choice(card, size=n_sig, replace=n_sig > card)


def generate(config: SynthConfig = SynthConfig()) -> list[AlarmRecord]:
    """Records sorted by report time; exactly ``round(rate * N)`` are faults."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_rows
    names = {f: value_names(f, config.cardinalities[f]) for f in CATEGORICAL_FIELDS}
    probs = {f: _zipf_probs(len(names[f]), config.zipf_exponent, rng) for f in CATEGORICAL_FIELDS}
    signatures = {f: _pick_signatures(len(names[f]), config.n_signatures, rng) for f in SIGNATURE_FIELDS}

    values = {f: rng.choice(len(names[f]), size=n, p=probs[f]) for f in CATEGORICAL_FIELDS}
    n_anom = int(round(config.anomaly_rate * n))
    labels = np.zeros(n, dtype=np.int64)
    anomalous = np.sort(rng.choice(n, size=n_anom, replace=False))
    labels[anomalous] = 1
    which = rng.integers(0, config.n_signatures, size=n_anom)
    for f in SIGNATURE_FIELDS:
        use = rng.random(n_anom) < config.strength
        values[f][anomalous[use]] = signatures[f][which[use]]

    start, end = parse_timestamp(config.start), parse_timestamp(config.end)
    times = rng.integers(start, end, size=n)
    durations = np.ceil(rng.exponential(3600.0, size=n)).astype(np.int64)
    order = np.argsort(times, kind="stable")

    records = []
    for i in order:
        records.append(
            AlarmRecord(
                report_time=int(times[i]),
                clear_time=int(times[i] + durations[i]),
                label=int(labels[i]),
                **{f: names[f][values[f][i]] for f in CATEGORICAL_FIELDS},
            )
        )
    return records
