"""Chi-square and Theil's U scoring of categorical features against the label."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from semcad.data_model import EncodedDataset


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureScore:
    feature: str
    theils_u: float
    chi_square: float
    dof: int
    selected: bool = False
    constant_label: bool = False


def contingency_table(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Counts of (x, y) pairs; rows are x categories, columns y categories (both compacted)."""
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((xi.max(initial=-1) + 1, yi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (xi, yi), 1)
    return table


def _check(table) -> np.ndarray:
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or t.size == 0:
        raise SelectionError("contingency table must be a non-empty 2-D array")
    if (t < 0).any() or not np.isfinite(t).all():
        raise SelectionError("contingency table has negative or non-finite counts")
    if t.sum() <= 0:
        raise SelectionError("contingency table is all zeros")
    return t


def chi_square(table) -> tuple[float, int]:
    """Pearson chi-square statistic and degrees of freedom.

    Empty rows/columns are dropped before computing ``dof``; a table that is left
    with a single row or column scores ``(0.0, 0)``.
    """
    t = _check(table)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    r, c = t.shape
    if r < 2 or c < 2:
        return 0.0, 0
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    stat = float(np.sum((t - expected) ** 2 / expected))
    return stat, (r - 1) * (c - 1)


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def theils_u(table, given: str = "rows") -> float:
    """Uncertainty coefficient U(Y|X) of the table.

    With ``given="rows"`` the rows are the conditioning variable X and the
    columns the predicted variable Y; ``given="columns"`` swaps the roles.
    A constant Y has zero entropy and scores 1.0.
    """
    t = _check(table)
    if given == "columns":
        t = t.T
    elif given != "rows":
        raise SelectionError(f"given must be 'rows' or 'columns', not {given!r}")
    h_y = _entropy(t.sum(axis=0))
    if h_y == 0.0:
        return 1.0
    n = t.sum()
    h_y_given_x = 0.0
    for row in t:
        nx = row.sum()
        if nx > 0:
            h_y_given_x += nx / n * _entropy(row)
    u = (h_y - h_y_given_x) / h_y
    return float(min(1.0, max(0.0, u)))


def score_feature(name: str, column: np.ndarray, labels: np.ndarray) -> FeatureScore:
    table = contingency_table(column, labels)
    stat, dof = chi_square(table)
    constant = len(np.unique(labels)) < 2
    return FeatureScore(name, theils_u(table, given="rows"), stat, dof, constant_label=constant)


def rank_features(dataset: EncodedDataset, k: int) -> list[FeatureScore]:
    """Score every column against the label and mark the top ``k`` as selected.

    Order: Theil's U(label | feature) descending, then chi-square descending,
    then feature name.
    """
    nfeat = len(dataset.features)
    if k <= 0:
        raise SelectionError("k must be positive")
    if k > nfeat:
        raise SelectionError(f"k={k} exceeds the {nfeat} available features")
    if len(dataset) == 0:
        raise SelectionError("cannot rank features on an empty dataset")
    scores = [score_feature(f, dataset.codes[:, j], dataset.labels) for j, f in enumerate(dataset.features)]
    scores.sort(key=lambda s: (-s.theils_u, -s.chi_square, s.feature))
    return [
        FeatureScore(s.feature, s.theils_u, s.chi_square, s.dof, i < k, s.constant_label)
        for i, s in enumerate(scores)
    ]


def write_scores_csv(scores: Sequence[FeatureScore], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "theils_u", "chi2", "dof", "selected"])
        for s in scores:
            w.writerow([s.feature, repr(s.theils_u), repr(s.chi_square), s.dof, int(s.selected)])
