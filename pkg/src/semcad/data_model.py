"""Alarm records, CSV ingestion and categorical encoding."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

ENCODER_FORMAT_VERSION = 1

# ITU-T X.733 perceived severities, lowest intensity first.
DEFAULT_SEVERITY_SCALE = ("cleared", "indeterminate", "warning", "minor", "major", "critical")

CATEGORICAL_FIELDS = (
    "severity",
    "alarm_type",
    "site_code",
    "city",
    "domain",
    "segment_name",
    "management_system",
    "port_type",
    "equipment_type",
)
TIME_FIELDS = ("hour", "day", "weekday", "month", "season", "year")

# Column order of the model input.
DEFAULT_FEATURES = CATEGORICAL_FIELDS + ("hour",)
ALL_FEATURES = CATEGORICAL_FIELDS + TIME_FIELDS

# Calendar features with a fixed value range: the code is the value itself.
FIXED_RANGE = {"hour": 24, "day": 31, "weekday": 7, "month": 12, "season": 4}

RECORD_FIELDS = ("report_time", "clear_time") + CATEGORICAL_FIELDS + ("label",)
DEFAULT_SCHEMA = {name: name for name in RECORD_FIELDS}


class DataError(ValueError):
    """Raised for malformed input data."""


class IngestError(DataError):
    def __init__(self, problems: Sequence[tuple[int, str]]):
        self.problems = list(problems)
        lines = [f"row {row}: {msg}" for row, msg in self.problems[:20]]
        if len(self.problems) > 20:
            lines.append(f"... {len(self.problems) - 20} more")
        super().__init__("; ".join(lines))


@dataclass(frozen=True)
class AlarmRecord:
    report_time: int
    severity: str
    alarm_type: str
    site_code: str
    city: str
    domain: str
    segment_name: str
    management_system: str
    port_type: str
    equipment_type: str
    label: int
    clear_time: Optional[int] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if self.clear_time is not None and self.clear_time < self.report_time:
            raise DataError("clear_time precedes report_time")


@dataclass(frozen=True)
class TimeFeatures:
    hour: int
    day: int
    weekday: int
    month: int
    season: int
    year: int


def extract_time_features(record_or_ts) -> TimeFeatures:
    """Calendar decomposition of a report time (UTC).

    ``hour`` is shifted to 1..24 and ``weekday`` runs Monday=1..Sunday=7.
    Seasons are meteorological: DJF=1, MAM=2, JJA=3, SON=4.
    """
    ts = record_or_ts.report_time if isinstance(record_or_ts, AlarmRecord) else record_or_ts
    dt = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    return TimeFeatures(
        hour=dt.hour + 1,
        day=dt.day,
        weekday=dt.isoweekday(),
        month=dt.month,
        season=(dt.month % 12) // 3 + 1,
        year=dt.year,
    )


# ---------------------------------------------------------------------------
# timestamps and CSV
# ---------------------------------------------------------------------------

_INT_RE = re.compile(r"^[+-]?\d+$")


def parse_timestamp(text: str) -> int:
    """RFC 3339 string or integer epoch seconds -> epoch seconds."""
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    iso = text[:-1] + "+00:00" if text[-1:] in ("Z", "z") else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _column_kind(values: Iterable[str]) -> str:
    present = [v.strip() for v in values if v.strip()]
    if present and all(_INT_RE.match(v) for v in present):
        return "epoch"
    return "rfc3339"


def _parse_ts(text: str, kind: str) -> int:
    text = text.strip()
    if kind == "epoch":
        return int(text)
    if _INT_RE.match(text):
        raise ValueError(f"bare integer {text!r} in an RFC 3339 column")
    return parse_timestamp(text)


def ingest_csv(path, schema: Optional[Mapping[str, str]] = None) -> list[AlarmRecord]:
    """Read alarm records from a headed UTF-8 CSV.

    ``schema`` maps record field names to CSV column names; unmapped fields use
    their own name.  ``clear_time`` is optional.  All row problems are collected
    and raised together as one :class:`IngestError`.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    colmap = dict(DEFAULT_SCHEMA)
    colmap.update(schema or {})
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DataError(f"{path}: missing header row")
        required = [f for f in RECORD_FIELDS if f != "clear_time"]
        missing = [colmap[f] for f in required if colmap[f] not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)

    has_clear = colmap["clear_time"] in header
    kinds = {"report_time": _column_kind(r[colmap["report_time"]] or "" for r in rows)}
    if has_clear:
        kinds["clear_time"] = _column_kind(r[colmap["clear_time"]] or "" for r in rows)

    records, problems = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            report = _parse_ts(row[colmap["report_time"]] or "", kinds["report_time"])
        except ValueError:
            problems.append((lineno, f"malformed report_time {row[colmap['report_time']]!r}"))
            continue
        clear = None
        if has_clear and (row[colmap["clear_time"]] or "").strip():
            try:
                clear = _parse_ts(row[colmap["clear_time"]], kinds["clear_time"])
            except ValueError:
                problems.append((lineno, f"malformed clear_time {row[colmap['clear_time']]!r}"))
                continue
        label_text = (row[colmap["label"]] or "").strip()
        if label_text not in ("0", "1"):
            problems.append((lineno, f"label {label_text!r} not in {{0,1}}"))
            continue
        if clear is not None and clear < report:
            problems.append((lineno, "clear_time precedes report_time"))
            continue
        values = {f: (row[colmap[f]] or "").strip() for f in CATEGORICAL_FIELDS}
        records.append(AlarmRecord(report_time=report, clear_time=clear, label=int(label_text), **values))
    if problems:
        raise IngestError(problems)
    return records


def write_csv(records: Sequence[AlarmRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [format_timestamp(r.report_time), "" if r.clear_time is None else format_timestamp(r.clear_time)]
                + [getattr(r, f) for f in CATEGORICAL_FIELDS]
                + [r.label]
            )


def temporal_split(records: Sequence[AlarmRecord], train_fraction: float = 0.8):
    """Earliest ``train_fraction`` of rows by report time, then the rest (stable)."""
    order = sorted(range(len(records)), key=lambda i: records[i].report_time)
    cut = int(round(train_fraction * len(records)))
    return [records[i] for i in order[:cut]], [records[i] for i in order[cut:]]


def random_split(records: Sequence[AlarmRecord], train_fraction: float = 0.8, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(len(records))
    cut = int(round(train_fraction * len(records)))
    return [records[i] for i in sorted(perm[:cut])], [records[i] for i in sorted(perm[cut:])]


# ---------------------------------------------------------------------------
# alarm-type mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MappingRule:
    pattern: str
    category: str
    prefix: bool = False

    def matches(self, value: str) -> bool:
        if self.prefix:
            return value.casefold().startswith(self.pattern.casefold())
        return value == self.pattern


@dataclass(frozen=True)
class AlarmTypeMapping:
    """Ordered vendor alarm-type rewrite rules; the first matching rule wins."""

    rules: tuple[MappingRule, ...] = ()

    def apply(self, alarm_type: str) -> str:
        for rule in self.rules:
            if rule.matches(alarm_type):
                return rule.category
        return alarm_type

    @classmethod
    def parse(cls, text: str) -> "AlarmTypeMapping":
        """Parse ``pattern => category`` lines; ``prefix:`` marks a prefix rule."""
        rules = []
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=>" not in line:
                raise DataError(f"mapping line {n}: expected 'pattern => category'")
            pattern, category = (part.strip() for part in line.split("=>", 1))
            prefix = pattern.startswith("prefix:")
            if prefix:
                pattern = pattern[len("prefix:") :].strip()
            if not pattern or not category:
                raise DataError(f"mapping line {n}: empty pattern or category")
            rules.append(MappingRule(pattern, category, prefix))
        return cls(tuple(rules))

    @classmethod
    def load(cls, path) -> "AlarmTypeMapping":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def to_json(self) -> list:
        return [{"pattern": r.pattern, "category": r.category, "prefix": r.prefix} for r in self.rules]

    @classmethod
    def from_json(cls, items) -> "AlarmTypeMapping":
        return cls(tuple(MappingRule(i["pattern"], i["category"], bool(i["prefix"])) for i in items))


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def _raw_value(record: AlarmRecord, feature: str, mapping: AlarmTypeMapping, tf: Optional[TimeFeatures]):
    if feature in TIME_FIELDS:
        return getattr(tf, feature)
    value = getattr(record, feature)
    if feature == "alarm_type":
        value = mapping.apply(value)
    return value


@dataclass(frozen=True)
class VocabularyEncoder:
    """Per-feature value -> code maps.  Code 0 is reserved for unseen values.

    Fixed-range calendar features (hour, day, ...) encode as their own value.
    """

    features: tuple[str, ...]
    vocabularies: Mapping[str, tuple]
    severity_scale: tuple[str, ...]
    mapping: AlarmTypeMapping = field(default_factory=AlarmTypeMapping)

    def __post_init__(self):
        lookup = {}
        for f in self.features:
            if f in FIXED_RANGE:
                continue
            lookup[f] = {v: i + 1 for i, v in enumerate(self.vocabularies[f])}
        object.__setattr__(self, "_lookup", lookup)

    @property
    def cardinalities(self) -> np.ndarray:
        """Embedding rows per feature: number of known values plus UNKNOWN."""
        return np.array([self.cardinality(f) for f in self.features], dtype=np.int64)

    def cardinality(self, feature: str) -> int:
        if feature in FIXED_RANGE:
            return FIXED_RANGE[feature] + 1
        return len(self.vocabularies[feature]) + 1

    def encode(self, feature: str, value) -> int:
        if feature in FIXED_RANGE:
            v = int(value)
            return v if 1 <= v <= FIXED_RANGE[feature] else 0
        return self._lookup[feature].get(value, 0)

    def decode(self, feature: str, code: int):
        if code == 0:
            return None
        if feature in FIXED_RANGE:
            return code
        return self.vocabularies[feature][code - 1]

    def to_json(self) -> dict:
        return {
            "format_version": ENCODER_FORMAT_VERSION,
            "features": list(self.features),
            "vocabularies": {f: list(self.vocabularies[f]) for f in self.features if f not in FIXED_RANGE},
            "severity_scale": list(self.severity_scale),
            "mapping": self.mapping.to_json(),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "VocabularyEncoder":
        if doc.get("format_version") != ENCODER_FORMAT_VERSION:
            raise DataError(f"unsupported encoder format_version {doc.get('format_version')!r}")
        return cls(
            features=tuple(doc["features"]),
            vocabularies={f: tuple(v) for f, v in doc["vocabularies"].items()},
            severity_scale=tuple(doc["severity_scale"]),
            mapping=AlarmTypeMapping.from_json(doc["mapping"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "VocabularyEncoder":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_encoder(
    records: Sequence[AlarmRecord],
    mapping: Optional[AlarmTypeMapping] = None,
    severity_scale: Sequence[str] = DEFAULT_SEVERITY_SCALE,
    features: Sequence[str] = DEFAULT_FEATURES,
) -> VocabularyEncoder:
    """Build vocabularies in first-seen order; severity follows ``severity_scale``."""
    mapping = mapping or AlarmTypeMapping()
    scale = tuple(severity_scale)
    if not scale:
        raise DataError("severity scale is empty")
    if len(set(scale)) != len(scale):
        raise DataError("severity scale has duplicate entries")
    unknown = sorted({r.severity for r in records} - set(scale))
    if unknown:
        raise DataError(f"severity value(s) not in scale: {', '.join(unknown)}")
    need_time = any(f in TIME_FIELDS for f in features)
    vocab: dict[str, dict] = {f: {} for f in features if f not in FIXED_RANGE}
    for r in records:
        tf = extract_time_features(r) if need_time else None
        for f in vocab:
            if f == "severity":
                continue
            vocab[f].setdefault(_raw_value(r, f, mapping, tf), None)
    if "severity" in vocab:
        vocab["severity"] = dict.fromkeys(scale)
    return VocabularyEncoder(
        features=tuple(features),
        vocabularies={f: tuple(v) for f, v in vocab.items()},
        severity_scale=scale,
        mapping=mapping,
    )


@dataclass(frozen=True)
class EncodedDataset:
    codes: np.ndarray  # (N, F) int64
    labels: np.ndarray  # (N,) int64
    cardinalities: np.ndarray  # (F,) rows per feature including UNKNOWN
    features: tuple[str, ...]

    def __post_init__(self):
        if self.codes.shape[0] != self.labels.shape[0]:
            raise DataError("row count of codes and labels differ")
        if self.codes.shape[1] != len(self.features):
            raise DataError("column count does not match feature list")

    def __len__(self):
        return self.codes.shape[0]

    def subset(self, rows) -> "EncodedDataset":
        return EncodedDataset(self.codes[rows], self.labels[rows], self.cardinalities, self.features)


def transform(
    records: Sequence[AlarmRecord],
    encoder: VocabularyEncoder,
    mapping: Optional[AlarmTypeMapping] = None,
) -> EncodedDataset:
    """Encode records column by column in the encoder's feature order."""
    mapping = encoder.mapping if mapping is None else mapping
    feats = encoder.features
    need_time = any(f in TIME_FIELDS for f in feats)
    codes = np.zeros((len(records), len(feats)), dtype=np.int64)
    for i, r in enumerate(records):
        tf = extract_time_features(r) if need_time else None
        for j, f in enumerate(feats):
            codes[i, j] = encoder.encode(f, _raw_value(r, f, mapping, tf))
    labels = np.fromiter((r.label for r in records), dtype=np.int64, count=len(records))
    return EncodedDataset(codes, labels, encoder.cardinalities, feats)
