"""Principal components of standardized data via Jacobi eigendecomposition."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from semcad import kernels
from semcad.persist import read_container, write_container

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class PcaError(ValueError):
    pass


@dataclass
class PcaModel:
    mean: np.ndarray  # (D,)
    scale: np.ndarray  # (D,) column std, 1 where the std is zero or scaling is off
    components: np.ndarray  # (n, D), orthonormal rows
    eigenvalues: np.ndarray  # (n,), descending
    explained_variance_ratio: np.ndarray  # (D,), all components
    standardize: bool = True

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_meta(self) -> dict:
        return {
            "n_components": self.n_components,
            "dim": int(self.mean.shape[0]),
            "standardize": self.standardize,
        }

    def to_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("mean", self.mean),
            ("scale", self.scale),
            ("components", self.components),
            ("eigenvalues", self.eigenvalues),
            ("explained_variance_ratio", self.explained_variance_ratio),
        ]

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "PcaModel":
        return cls(
            arrays["mean"],
            arrays["scale"],
            arrays["components"].reshape(meta["n_components"], meta["dim"]),
            arrays["eigenvalues"],
            arrays["explained_variance_ratio"],
            bool(meta["standardize"]),
        )

    def save(self, path) -> None:
        write_container(path, "pca_model", self.to_meta(), self.to_arrays())

    @classmethod
    def load(cls, path) -> "PcaModel":
        return cls.from_parts(*read_container(path, "pca_model"))


def symmetric_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix."""
    a = np.asarray(matrix, dtype=np.float64)
    a = 0.5 * (a + a.T)
    w, v, sweeps = kernels.jacobi_eigh(np.ascontiguousarray(a), JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise PcaError(f"Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _standardize(data: np.ndarray, standardize: bool):
    mean = data.mean(axis=0)
    if standardize:
        scale = data.std(axis=0, ddof=1)
        scale[~(scale > 0)] = 1.0
    else:
        scale = np.ones(data.shape[1])
    return mean, scale


def fit(
    data,
    n_components: Optional[int] = 2,
    variance_threshold: Optional[float] = None,
    standardize: bool = True,
) -> PcaModel:
    """Fit on an N x D matrix.

    Give either a fixed ``n_components`` or a ``variance_threshold`` tau, in
    which case the smallest n whose cumulative explained ratio reaches tau is
    kept.  Each component is signed so its largest-magnitude entry is positive.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise PcaError("data must be a 2-D matrix")
    n_rows, dim = x.shape
    if n_rows < 2:
        raise PcaError("need at least two rows")
    if dim < 1:
        raise PcaError("need at least one column")
    if not np.isfinite(x).all():
        raise PcaError("data contains non-finite values")
    mean, scale = _standardize(x, standardize)
    z = (x - mean) / scale
    cov = z.T @ z / (n_rows - 1)
    eigvals, eigvecs = symmetric_eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    total = eigvals.sum()
    ratios = eigvals / total if total > 0 else np.zeros(dim)

    if variance_threshold is not None:
        if not 0.0 < variance_threshold <= 1.0:
            raise PcaError("variance_threshold must lie in (0, 1]")
        cum = np.cumsum(ratios)
        n = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
        n = min(n, dim)
    else:
        if n_components is None or not 1 <= n_components <= dim:
            raise PcaError(f"n_components must lie in [1, {dim}]")
        n = n_components

    comps = eigvecs[:, :n].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, scale, comps, eigvals[:n].copy(), ratios, standardize)


def transform(model: PcaModel, data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.mean.shape[0]:
        raise PcaError(f"expected {model.mean.shape[0]} columns, got shape {x.shape}")
    return ((x - model.mean) / model.scale) @ model.components.T


def variance_spectrum(model: PcaModel, first_k: int = 50) -> np.ndarray:
    """The first ``first_k`` explained-variance ratios (all of them if fewer exist)."""
    return model.explained_variance_ratio[: max(0, first_k)].copy()


def write_spectrum_csv(ratios, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component_index", "variance_ratio"])
        for i, r in enumerate(ratios, start=1):
            w.writerow([i, repr(float(r))])


def write_projection_csv(points: np.ndarray, labels, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "label"])
        for p, y in zip(points, labels):
            w.writerow([repr(float(p[0])), repr(float(p[1])) if len(p) > 1 else "0.0", int(y)])
