"""K-means++ / Lloyd, full-covariance Gaussian mixture EM, and anomaly-cluster labeling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from semcad import kernels

LOG_2PI = np.log(2.0 * np.pi)


class ClusteringError(ValueError):
    pass


def _check_points(points, k: int) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ClusteringError("points must be an M x n matrix with n >= 1")
    if k < 1:
        raise ClusteringError("K must be at least 1")
    if x.shape[0] < k:
        raise ClusteringError(f"need at least K={k} points, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise ClusteringError("points contain non-finite values")
    return np.ascontiguousarray(x)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


@dataclass
class KMeansModel:
    centroids: np.ndarray  # (K, n)
    seed: int
    inertia: float
    n_iter: int
    inertia_trace: list[float] = field(default_factory=list)

    def predict(self, points) -> np.ndarray:
        x = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        labels, _ = kernels.nearest_centroid(x, self.centroids)
        return labels


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(m)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, m - 1)
        else:
            i = int(rng.integers(m))
        centroids[c] = x[i]
        d2 = np.minimum(d2, np.sum((x - centroids[c]) ** 2, axis=1))
    return centroids


def kmeans_fit(points, k: int, seed: int = 0, max_iter: int = 300) -> KMeansModel:
    """k-means++ seeding then Lloyd iterations until assignments stop changing."""
    x = _check_points(points, k)
    rng = np.random.default_rng(seed)
    centroids = kmeans_plus_plus(x, k, rng)
    labels, d2 = kernels.nearest_centroid(x, centroids)
    trace = [float(d2.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        taken = set()
        for c in range(k):
            if counts[c] > 0:
                new[c] /= counts[c]
            else:
                # farthest point from its own centroid, not already used
                for i in np.argsort(-d2, kind="stable"):
                    if int(i) not in taken:
                        taken.add(int(i))
                        new[c] = x[i]
                        break
        centroids = new
        new_labels, d2 = kernels.nearest_centroid(x, centroids)
        trace.append(float(d2.sum()))
        if np.array_equal(new_labels, labels) and counts.min() > 0:
            break
        labels = new_labels
    return KMeansModel(centroids, seed, float(d2.sum()), n_iter, trace)


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, n)
    covariances: np.ndarray  # (K, n, n)
    seed: int = 0
    reg: float = 1e-6
    log_likelihood: float = float("nan")
    n_iter: int = 0
    converged: bool = False
    ll_trace: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_meta(self) -> dict:
        return {
            "n_components": self.n_components,
            "dim": self.dim,
            "seed": self.seed,
            "reg": self.reg,
            "log_likelihood": self.log_likelihood,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    def to_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [("weights", self.weights), ("means", self.means), ("covariances", self.covariances)]

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "GmmModel":
        k, n = meta["n_components"], meta["dim"]
        return cls(
            arrays["weights"].reshape(k),
            arrays["means"].reshape(k, n),
            arrays["covariances"].reshape(k, n, n),
            seed=meta["seed"],
            reg=meta["reg"],
            log_likelihood=meta["log_likelihood"],
            n_iter=meta["n_iter"],
            converged=meta["converged"],
        )


def _cholesky(cov: np.ndarray, floor: float) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    # eigenvalue floor repair
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    repaired = (v * np.maximum(w, floor)) @ v.T
    try:
        return np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError as exc:
        raise ClusteringError("covariance is not positive definite after repair") from exc


def component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log pi_k + log N(x; mu_k, Sigma_k) for every point and component, (M, K)."""
    m, n = x.shape
    out = np.empty((m, model.n_components))
    for k in range(model.n_components):
        chol = _cholesky(model.covariances[k], model.reg)
        diff = x - model.means[k]
        sol = np.linalg.solve(chol, diff.T)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, k] = np.log(model.weights[k]) - 0.5 * (n * LOG_2PI + logdet + maha)
    return out


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1, keepdims=True)
    return (top + np.log(np.sum(np.exp(a - top), axis=1, keepdims=True)))[:, 0]


def _e_step(model: GmmModel, x: np.ndarray) -> tuple[np.ndarray, float]:
    logp = component_log_densities(model, x)
    norm = _logsumexp_rows(logp)
    return np.exp(logp - norm[:, None]), float(norm.sum())


def _m_step(x: np.ndarray, resp: np.ndarray, reg: float):
    m, n = x.shape
    nk = resp.sum(axis=0)
    nk = np.maximum(nk, 10.0 * np.finfo(float).tiny)
    weights = nk / m
    weights /= weights.sum()
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((resp.shape[1], n, n))
    for k in range(resp.shape[1]):
        diff = x - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k]
        covs[k] = 0.5 * (covs[k] + covs[k].T) + reg * np.eye(n)
    return weights, means, covs


def log_likelihood(model: GmmModel, points) -> float:
    x = np.asarray(points, dtype=np.float64)
    return float(_logsumexp_rows(component_log_densities(model, x)).sum())


def gmm_fit(
    points,
    k: int = 5,
    seed: int = 0,
    reg: float = 1e-6,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> GmmModel:
    """EM for a full-covariance mixture, initialised from :func:`kmeans_fit`.

    ``reg`` is added to every covariance diagonal after each M-step.  The
    returned model carries the log-likelihood of its own parameters and the
    per-iteration trace (entry 0 is the initialisation).
    """
    x = _check_points(points, k)
    m, n = x.shape
    km = kmeans_fit(x, k, seed=seed)
    labels = km.predict(x)
    resp = np.zeros((m, k))
    resp[np.arange(m), labels] = 1.0
    weights, means, covs = _m_step(x, resp, reg)
    model = GmmModel(weights, means, covs, seed=seed, reg=reg)

    resp, ll = _e_step(model, x)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        model.weights, model.means, model.covariances = _m_step(x, resp, reg)
        resp, new_ll = _e_step(model, x)
        trace.append(new_ll)
        gain = new_ll - ll
        ll = new_ll
        if gain < tol:
            converged = True
            break
    model.log_likelihood = ll
    model.n_iter = it
    model.converged = converged
    model.ll_trace = trace
    return model


def _check_dim(model: GmmModel, points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.dim:
        raise ClusteringError(f"expected points of length {model.dim}, got {x.shape[1]}")
    return x


def responsibilities(model: GmmModel, points) -> np.ndarray:
    """Posterior component probabilities; one row per point (or a vector for one point)."""
    single = np.ndim(points) == 1
    x = _check_dim(model, points)
    resp, _ = _e_step(model, x)
    return resp[0] if single else resp


def assign(model: GmmModel, points) -> np.ndarray:
    """Hard assignment: argmax responsibility, lowest index on ties."""
    x = _check_dim(model, points)
    return np.argmax(component_log_densities(model, x), axis=1)


# ---------------------------------------------------------------------------
# labeling and classification
# ---------------------------------------------------------------------------


@dataclass
class ClusterLabeling:
    anomaly_counts: np.ndarray  # (K,) int
    normal_counts: np.ndarray  # (K,) int
    threshold: float
    rule: str = "fraction"  # "fraction": a/(a+n) > rho ; "odds": a/n > rho

    @property
    def anomaly_fraction(self) -> np.ndarray:
        total = self.anomaly_counts + self.normal_counts
        return np.divide(self.anomaly_counts, total, out=np.zeros(len(total)), where=total > 0)

    @property
    def flagged(self) -> np.ndarray:
        a = self.anomaly_counts.astype(np.float64)
        nrm = self.normal_counts.astype(np.float64)
        total = a + nrm
        if self.rule == "fraction":
            score = self.anomaly_fraction
        else:
            score = np.divide(a, nrm, out=np.full(len(a), np.inf), where=nrm > 0)
        return (total > 0) & (score > self.threshold)

    def to_meta(self) -> dict:
        return {
            "anomaly_counts": [int(c) for c in self.anomaly_counts],
            "normal_counts": [int(c) for c in self.normal_counts],
            "anomaly_fraction": [float(f) for f in self.anomaly_fraction],
            "flagged": [bool(f) for f in self.flagged],
            "threshold": self.threshold,
            "rule": self.rule,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ClusterLabeling":
        return cls(
            np.array(meta["anomaly_counts"], dtype=np.int64),
            np.array(meta["normal_counts"], dtype=np.int64),
            float(meta["threshold"]),
            meta.get("rule", "fraction"),
        )

    def with_threshold(self, threshold: float) -> "ClusterLabeling":
        return ClusterLabeling(self.anomaly_counts, self.normal_counts, threshold, self.rule)


def label_from_assignments(
    clusters: Sequence[int], labels: Sequence[int], k: int, rho: float = 0.9, rule: str = "fraction"
) -> ClusterLabeling:
    clusters = np.asarray(clusters, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if clusters.shape != labels.shape:
        raise ClusteringError("cluster and label vectors differ in length")
    if clusters.size == 0:
        raise ClusteringError("no points to label")
    if not 0.0 < rho < 1.0 and rule == "fraction":
        raise ClusteringError("rho must lie in (0, 1)")
    if rule not in ("fraction", "odds"):
        raise ClusteringError(f"unknown labeling rule {rule!r}")
    anomalies = np.bincount(clusters[labels == 1], minlength=k)
    normals = np.bincount(clusters[labels == 0], minlength=k)
    return ClusterLabeling(anomalies, normals, float(rho), rule)


def label_clusters(model: GmmModel, points, labels, rho: float = 0.9, rule: str = "fraction") -> ClusterLabeling:
    """Hard-assign training points and flag clusters whose anomaly share exceeds ``rho``."""
    x = _check_dim(model, points)
    labels = np.asarray(labels)
    if x.shape[0] != labels.shape[0]:
        raise ClusteringError("points and labels differ in length")
    return label_from_assignments(assign(model, x), labels, model.n_components, rho, rule)


def classify(model: GmmModel, labeling: ClusterLabeling, points) -> np.ndarray:
    """1 (anomaly) where the assigned cluster is flagged, else 0."""
    single = np.ndim(points) == 1
    out = labeling.flagged[assign(model, points)].astype(np.int64)
    return out[0] if single else out


def write_assignment_csv(points, labels, clusters, flagged, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "label", "cluster", "flagged"])
        for p, y, c in zip(points, labels, clusters):
            w.writerow([repr(float(p[0])), repr(float(p[1])) if len(p) > 1 else "0.0", int(y), int(c), int(flagged[c])])
