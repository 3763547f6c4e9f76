"""Per-class precision/recall, PR curves and precision-targeted thresholds.

Undefined ratios (zero denominators) are ``None``, never silently 0 or 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ClassMetrics:
    precision: Optional[float]
    recall: Optional[float]
    support: int
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class ClassReport:
    normal: ClassMetrics
    anomaly: ClassMetrics
    threshold: Optional[float] = None
    method: str = ""
    extra: dict = field(default_factory=dict)

    def __getitem__(self, cls: int) -> ClassMetrics:
        return (self.normal, self.anomaly)[cls]

    @property
    def n(self) -> int:
        return self.normal.support + self.anomaly.support

    def to_json(self) -> dict:
        def m(c: ClassMetrics):
            return {"precision": c.precision, "recall": c.recall, "support": c.support, "tp": c.tp, "fp": c.fp, "fn": c.fn}

        return {
            "method": self.method,
            "threshold": self.threshold,
            "classes": {"0": m(self.normal), "1": m(self.anomaly)},
            **({"extra": self.extra} if self.extra else {}),
        }


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def _binary(values, name: str) -> np.ndarray:
    a = np.asarray(values)
    if a.ndim != 1:
        raise EvaluationError(f"{name} must be a 1-D vector")
    if a.size and not np.isin(a, (0, 1)).all():
        raise EvaluationError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


def precision_recall(
    predictions: Sequence[int], labels: Sequence[int], threshold: Optional[float] = None, method: str = ""
) -> ClassReport:
    pred = _binary(predictions, "predictions")
    true = _binary(labels, "labels")
    if pred.shape != true.shape:
        raise EvaluationError("predictions and labels differ in length")
    if pred.size == 0:
        raise EvaluationError("empty input")
    out = []
    for c in (0, 1):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        out.append(ClassMetrics(_ratio(tp, tp + fp), _ratio(tp, tp + fn), tp + fn, tp, fp, fn))
    return ClassReport(out[0], out[1], threshold, method)


@dataclass(frozen=True)
class PrCurve:
    """Anomaly-class operating points; a score >= threshold predicts anomaly."""

    thresholds: np.ndarray  # descending
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray

    def __len__(self):
        return self.thresholds.shape[0]

    def write_csv(self, path) -> None:
        write_pr_csv(self, path)


def _scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels, "labels")
    if s.ndim != 1 or s.shape != y.shape:
        raise EvaluationError("scores and labels must be equal-length vectors")
    if not np.isfinite(s).all():
        raise EvaluationError("scores contain non-finite values")
    return s, y


def pr_curve(scores, labels) -> PrCurve:
    """One point per distinct score value, thresholds descending."""
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise EvaluationError("no positive labels; precision-recall curve undefined")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(1 - y_sorted)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = tp_cum[last]
    fp = fp_cum[last]
    return PrCurve(s_sorted[last].copy(), tp / (tp + fp), tp / n_pos, tp, fp)


def tune_threshold(scores, labels, target_precision: float = 0.60, method: str = "") -> tuple[float, ClassReport]:
    """Threshold with the highest anomaly recall among those reaching ``target_precision``.

    Recall ties go to the lower threshold.
    """
    if not 0.0 < target_precision <= 1.0:
        raise EvaluationError("target precision must lie in (0, 1]")
    s, y = _scores_labels(scores, labels)
    curve = pr_curve(s, y)
    ok = curve.precision >= target_precision
    if not ok.any():
        raise EvaluationError(
            f"target precision {target_precision:.3f} unachievable; max achievable precision {curve.precision.max():.4f}"
        )
    best_recall = curve.recall[ok].max()
    candidates = np.flatnonzero(ok & (curve.recall == best_recall))
    i = candidates[-1]  # thresholds descend, so the last is the lowest
    threshold = float(curve.thresholds[i])
    report = precision_recall((s >= threshold).astype(np.int64), y, threshold, method)
    return threshold, report


def write_pr_csv(curve: PrCurve, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in zip(curve.thresholds, curve.precision, curve.recall):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


@dataclass(frozen=True)
class Comparison:
    methods: list[str]
    reports: list[ClassReport]
    # improvements[a][b] = (recall_a - recall_b) / recall_b for the anomaly class
    improvements: dict[str, dict[str, Optional[float]]]

    def to_json(self) -> dict:
        return {
            "methods": self.methods,
            "reports": [r.to_json() for r in self.reports],
            "relative_recall_improvement": self.improvements,
        }

    def table(self) -> str:
        return format_table(self.reports)


def compare_methods(reports: Sequence[ClassReport]) -> Comparison:
    if len(reports) < 2:
        raise EvaluationError("need at least two reports to compare")
    names = []
    for i, r in enumerate(reports):
        name = r.method or f"method{i}"
        while name in names:
            name += "'"
        names.append(name)
    imp: dict[str, dict[str, Optional[float]]] = {}
    for a, ra in zip(names, reports):
        imp[a] = {}
        for b, rb in zip(names, reports):
            if a == b:
                continue
            ga, gb = ra.anomaly.recall, rb.anomaly.recall
            imp[a][b] = (ga - gb) / gb if ga is not None and gb else None
    return Comparison(names, list(reports), imp)


def _pct(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{100 * v:.1f} %"


def format_table(reports: Sequence[ClassReport]) -> str:
    """Aligned text table: one row per (method, class)."""
    rows = [("Method", "Class", "Precision", "Recall", "Support", "Threshold")]
    for r in reports:
        thr = "" if r.threshold is None else f"{r.threshold:.6g}"
        for c in (0, 1):
            m = r[c]
            rows.append((r.method if c == 0 else "", str(c), _pct(m.precision), _pct(m.recall), str(m.support), thr if c == 0 else ""))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows)


def write_report(reports, path_json=None, path_text=None, extra: Optional[dict] = None) -> None:
    if path_json is not None:
        doc = {"reports": [r.to_json() for r in reports], **(extra or {})}
        Path(path_json).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if path_text is not None:
        Path(path_text).write_text(format_table(reports) + "\n", encoding="utf-8")
