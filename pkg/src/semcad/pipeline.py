"""End-to-end SEMC-AD: encode -> embed -> project -> cluster -> label clusters.

A :class:`PipelineBundle` holds every fitted stage and is the deployable
classifier.  All randomness derives from one seed: each stage gets
``derive_seed(seed, stage_name)``.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from semcad import clustering, embedding_net, pca
from semcad.data_model import (
    ALL_FEATURES,
    DEFAULT_FEATURES,
    DEFAULT_SEVERITY_SCALE,
    AlarmRecord,
    AlarmTypeMapping,
    VocabularyEncoder,
    fit_encoder,
    transform,
)
from semcad.embedding_net import EmbeddingModel, TrainConfig
from semcad.feature_selection import rank_features
from semcad.persist import FormatError, decode_container, encode_container

BUNDLE_FORMAT_VERSION = 1
BUNDLE_KIND = "semcad_bundle"


class StageError(RuntimeError):
    """An error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    features: tuple[str, ...] = DEFAULT_FEATURES
    select_k: Optional[int] = None
    severity_scale: tuple[str, ...] = DEFAULT_SEVERITY_SCALE
    train: TrainConfig = field(default_factory=TrainConfig)
    n_components: int = 2
    variance_threshold: Optional[float] = None
    standardize: bool = True
    n_clusters: int = 5
    gmm_reg: float = 1e-6
    gmm_tol: float = 1e-6
    gmm_max_iter: int = 200
    rho: float = 0.9
    rho_rule: str = "fraction"

    def to_json(self) -> dict:
        d = asdict(self)
        d["features"] = list(self.features)
        d["severity_scale"] = list(self.severity_scale)
        d["train"] = self.train.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "features" in d:
            d["features"] = tuple(d["features"])
        if "severity_scale" in d:
            d["severity_scale"] = tuple(d["severity_scale"])
        if "train" in d:
            d["train"] = TrainConfig.from_json({**TrainConfig().to_json(), **d["train"]})
        return cls(**d)


@dataclass
class PipelineBundle:
    encoder: VocabularyEncoder
    embedding: EmbeddingModel
    pca: pca.PcaModel
    gmm: clustering.GmmModel
    labeling: clustering.ClusterLabeling
    config: PipelineConfig
    format_version: int = BUNDLE_FORMAT_VERSION

    def check(self) -> None:
        cards = self.encoder.cardinalities
        if not np.array_equal(cards, self.embedding.cardinalities):
            raise FormatError("encoder cardinalities do not match the embedding tables")
        if self.pca.mean.shape[0] != self.embedding.width:
            raise FormatError("PCA input width does not match the embedding width")
        if self.gmm.dim != self.pca.n_components:
            raise FormatError("GMM dimension does not match the PCA component count")
        if self.labeling.anomaly_counts.shape[0] != self.gmm.n_components:
            raise FormatError("cluster labeling does not match the GMM component count")

    def project(self, records: Sequence[AlarmRecord]) -> np.ndarray:
        data = transform(records, self.encoder)
        emb = embedding_net.embed_dataset(self.embedding, data)
        return pca.transform(self.pca, emb)

    def clusters(self, records: Sequence[AlarmRecord]) -> np.ndarray:
        points = self.project(records)
        if points.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return clustering.assign(self.gmm, points)

    def classify(self, records: Sequence[AlarmRecord]) -> np.ndarray:
        """1 for records landing in a flagged cluster, else 0."""
        return self.labeling.flagged[self.clusters(records)].astype(np.int64)

    # persistence -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        self.check()
        meta = {
            "format_version": self.format_version,
            "config": self.config.to_json(),
            "encoder": self.encoder.to_json(),
            "embedding": self.embedding.to_meta(),
            "pca": self.pca.to_meta(),
            "gmm": self.gmm.to_meta(),
            "labeling": self.labeling.to_meta(),
        }
        arrays = []
        for prefix, part in (("embedding", self.embedding), ("pca", self.pca), ("gmm", self.gmm)):
            arrays += [(f"{prefix}/{name}", arr) for name, arr in part.to_arrays()]
        return encode_container(BUNDLE_KIND, meta, arrays)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "PipelineBundle":
        meta, arrays = decode_container(data, BUNDLE_KIND)
        if meta.get("format_version") != BUNDLE_FORMAT_VERSION:
            raise FormatError(f"bundle format_version {meta.get('format_version')!r} unsupported")

        def part(prefix):
            cut = len(prefix) + 1
            return {k[cut:]: v for k, v in arrays.items() if k.startswith(prefix + "/")}

        bundle = cls(
            encoder=VocabularyEncoder.from_json(meta["encoder"]),
            embedding=EmbeddingModel.from_parts(meta["embedding"], part("embedding")),
            pca=pca.PcaModel.from_parts(meta["pca"], part("pca")),
            gmm=clustering.GmmModel.from_parts(meta["gmm"], part("gmm")),
            labeling=clustering.ClusterLabeling.from_meta(meta["labeling"]),
            config=PipelineConfig.from_json(meta["config"]),
        )
        bundle.check()
        return bundle

    @classmethod
    def load(cls, path) -> "PipelineBundle":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class TrainArtifacts:
    """Byproducts of fitting that the CLI writes next to the bundle."""

    points: np.ndarray
    labels: np.ndarray
    clusters: np.ndarray
    spectrum: np.ndarray
    loss_trace: list[float]
    timings: dict[str, float]
    feature_scores: Optional[list] = None


def _stage(name: str, timings: dict, log: Optional[Callable[[str], None]]):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if log and exc is None:
                log(f"{name}: {timings[name]:.2f}s")
            if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
                raise StageError(name, str(exc)) from exc
            return False

    return _Timer()


def fit_semcad(
    records: Sequence[AlarmRecord],
    config: PipelineConfig = PipelineConfig(),
    mapping: Optional[AlarmTypeMapping] = None,
    log: Optional[Callable[[str], None]] = None,
) -> tuple[PipelineBundle, TrainArtifacts]:
    timings: dict[str, float] = {}
    scores = None
    with _stage("preprocess", timings, log):
        if not records:
            raise ValueError("no training records")
        features = config.features
        if config.select_k is not None:
            wide = fit_encoder(records, mapping, config.severity_scale, ALL_FEATURES)
            scores = rank_features(transform(records, wide), config.select_k)
            chosen = {s.feature for s in scores if s.selected}
            features = tuple(f for f in ALL_FEATURES if f in chosen)
        encoder = fit_encoder(records, mapping, config.severity_scale, features)
        data = transform(records, encoder)
    with _stage("embedding", timings, log):
        train_cfg = replace(config.train, seed=derive_seed(config.seed, "embedding"))
        model = embedding_net.build_model(data.cardinalities, train_cfg)
        model, trace = embedding_net.train(model, data, train_cfg)
        emb = embedding_net.embed_dataset(model, data)
    with _stage("pca", timings, log):
        if config.variance_threshold is not None:
            pmodel = pca.fit(emb, None, config.variance_threshold, config.standardize)
        else:
            pmodel = pca.fit(emb, config.n_components, None, config.standardize)
        points = pca.transform(pmodel, emb)
    with _stage("gmm", timings, log):
        gmm = clustering.gmm_fit(
            points,
            config.n_clusters,
            seed=derive_seed(config.seed, "gmm"),
            reg=config.gmm_reg,
            tol=config.gmm_tol,
            max_iter=config.gmm_max_iter,
        )
    with _stage("labeling", timings, log):
        clusters = clustering.assign(gmm, points)
        labeling = clustering.label_from_assignments(
            clusters, data.labels, gmm.n_components, config.rho, config.rho_rule
        )
    bundle = PipelineBundle(encoder, model, pmodel, gmm, labeling, config)
    artifacts = TrainArtifacts(points, data.labels, clusters, pmodel.explained_variance_ratio, trace, timings, scores)
    return bundle, artifacts


def rho_sweep(bundle: PipelineBundle, records: Sequence[AlarmRecord], rhos: Optional[Sequence[float]] = None):
    """SEMC-AD operating points obtained by varying the cluster-flagging ratio.

    Cluster counts stay those of training; only the flagging threshold moves.
    Returns ``(rho, predictions)`` pairs.
    """
    if rhos is None:
        rhos = np.round(np.linspace(0.05, 0.95, 19), 2)
    clusters = bundle.clusters(records)
    out = []
    for rho in rhos:
        flagged = bundle.labeling.with_threshold(float(rho)).flagged
        out.append((float(rho), flagged[clusters].astype(np.int64)))
    return out
