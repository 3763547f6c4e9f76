"""Supervised entity embeddings for categorical alarm features.

One embedding table per feature, lookups concatenated, then a small ReLU
network ending in a single logit.  Training minimises class-weighted binary
cross-entropy with Adam.  After training, the concatenated lookups are used
on their own as the numeric representation of an alarm.

Everything is float64 and hand-differentiated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from semcad import kernels
from semcad.data_model import EncodedDataset
from semcad.persist import read_container, write_container


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    class_weight: Optional[float] = None  # None -> n_normal / n_anomaly
    p_unknown: float = 0.02
    hidden: tuple[int, ...] = (128, 32)
    embedding_dims: Optional[tuple[int, ...]] = None
    max_embedding_dim: int = 50
    embedding_init: Optional[float] = 0.05  # None -> 1/sqrt(cardinality)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.embedding_dims is not None:
            object.__setattr__(self, "embedding_dims", tuple(int(d) for d in self.embedding_dims))
        for name in ("epochs", "batch_size", "max_embedding_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.class_weight is not None and self.class_weight <= 0:
            raise ValueError("class_weight must be positive")
        if not 0.0 <= self.p_unknown <= 0.5:
            raise ValueError("p_unknown must lie in [0, 0.5]")
        if any(h <= 0 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["embedding_dims"] = None if self.embedding_dims is None else list(self.embedding_dims)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", ()))
        if d.get("embedding_dims") is not None:
            d["embedding_dims"] = tuple(d["embedding_dims"])
        return cls(**d)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str  # "relu" or "identity"


@dataclass
class EmbeddingModel:
    cardinalities: np.ndarray
    embeddings: list[np.ndarray]
    layers: list[DenseLayer]
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def dims(self) -> list[int]:
        return [e.shape[1] for e in self.embeddings]

    @property
    def width(self) -> int:
        return int(sum(self.dims))

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays: embeddings in feature order, then weight, bias per layer."""
        params = list(self.embeddings)
        for layer in self.layers:
            params += [layer.weight, layer.bias]
        return params

    def parameter_names(self) -> list[str]:
        names = [f"embedding.{i}" for i in range(len(self.embeddings))]
        for i in range(len(self.layers)):
            names += [f"dense.{i}.weight", f"dense.{i}.bias"]
        return names

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            self.cardinalities.copy(),
            [e.copy() for e in self.embeddings],
            [DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            self.config,
        )

    # persistence -----------------------------------------------------------

    def to_meta(self) -> dict:
        return {
            "cardinalities": [int(c) for c in self.cardinalities],
            "embedding_dims": self.dims,
            "layers": [
                {"fan_in": l.weight.shape[0], "fan_out": l.weight.shape[1], "activation": l.activation}
                for l in self.layers
            ],
            "width": self.width,
            "config": self.config.to_json(),
        }

    def to_arrays(self) -> list[tuple[str, np.ndarray]]:
        return list(zip(self.parameter_names(), self.parameters()))

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "EmbeddingModel":
        n = len(meta["cardinalities"])
        embeddings = [arrays[f"embedding.{i}"] for i in range(n)]
        layers = [
            DenseLayer(arrays[f"dense.{i}.weight"], arrays[f"dense.{i}.bias"], spec["activation"])
            for i, spec in enumerate(meta["layers"])
        ]
        return cls(
            np.array(meta["cardinalities"], dtype=np.int64),
            embeddings,
            layers,
            TrainConfig.from_json(meta["config"]),
        )

    def save(self, path) -> None:
        write_container(path, "embedding_model", self.to_meta(), self.to_arrays())

    @classmethod
    def load(cls, path) -> "EmbeddingModel":
        meta, arrays = read_container(path, "embedding_model")
        return cls.from_parts(meta, arrays)


def default_embedding_dim(cardinality: int, cap: int = 50) -> int:
    return min(cap, math.ceil(cardinality / 2))


def embedding_dims(cardinalities: Sequence[int], config: TrainConfig) -> list[int]:
    if config.embedding_dims is not None:
        if len(config.embedding_dims) != len(cardinalities):
            raise ValueError("embedding_dims length does not match feature count")
        return list(config.embedding_dims)
    return [default_embedding_dim(int(c), config.max_embedding_dim) for c in cardinalities]


def build_model(cardinalities: Sequence[int], config: TrainConfig = TrainConfig()) -> EmbeddingModel:
    """Initialise dense weights and biases uniformly in +-1/sqrt(fan_in).

    Embedding tables use +-``config.embedding_init`` (0.05, as Keras does);
    with ``embedding_init=None`` they are treated as dense layers over a
    one-hot input, i.e. +-1/sqrt(cardinality).
    """
    cards = np.asarray(cardinalities, dtype=np.int64)
    if cards.size == 0 or (cards <= 0).any():
        raise ValueError("every cardinality must be positive")
    rng = np.random.default_rng(config.seed)
    dims = embedding_dims(cards, config)
    embeddings = []
    for card, d in zip(cards, dims):
        bound = config.embedding_init if config.embedding_init is not None else 1.0 / math.sqrt(card)
        embeddings.append(rng.uniform(-bound, bound, size=(int(card), d)))
    widths = [sum(dims), *config.hidden, 1]
    layers = []
    for i in range(len(widths) - 1):
        bound = 1.0 / math.sqrt(widths[i])
        w = rng.uniform(-bound, bound, size=(widths[i], widths[i + 1]))
        b = rng.uniform(-bound, bound, size=widths[i + 1])
        layers.append(DenseLayer(w, b, "relu" if i < len(widths) - 2 else "identity"))
    return EmbeddingModel(cards, embeddings, layers, config)


def _check_codes(model: EmbeddingModel, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != len(model.embeddings):
        raise ValueError(f"expected rows of {len(model.embeddings)} codes, got shape {codes.shape}")
    if codes.size and ((codes < 0).any() or (codes >= model.cardinalities).any()):
        raise ValueError("code out of range for its feature")
    return codes


def lookup(model: EmbeddingModel, codes: np.ndarray) -> np.ndarray:
    codes = _check_codes(model, codes)
    if codes.shape[0] == 0:
        return np.zeros((0, model.width))
    return np.concatenate([e[codes[:, f]] for f, e in enumerate(model.embeddings)], axis=1)


def _dense_forward(model: EmbeddingModel, x: np.ndarray):
    acts = [x]
    pre = []
    for layer in model.layers:
        z = acts[-1] @ layer.weight + layer.bias
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return pre, acts


def forward_batch(model: EmbeddingModel, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    emb = lookup(model, codes)
    _, acts = _dense_forward(model, emb)
    return acts[-1][:, 0], emb


def forward(model: EmbeddingModel, row) -> tuple[float, np.ndarray]:
    """Logit and embedding vector of one encoded row."""
    logits, emb = forward_batch(model, np.asarray(row, dtype=np.int64).reshape(1, -1))
    return float(logits[0]), emb[0]


def embed_dataset(model: EmbeddingModel, dataset: EncodedDataset) -> np.ndarray:
    return lookup(model, dataset.codes)


def predict_proba(model: EmbeddingModel, codes: np.ndarray) -> np.ndarray:
    logits, _ = forward_batch(model, codes)
    return 0.5 * (1.0 + np.tanh(0.5 * logits))


def weighted_bce(logits: np.ndarray, labels: np.ndarray, class_weight: float = 1.0) -> float:
    """Mean over rows of w_i * (softplus(z) - y z), with w_i = class_weight on anomalies."""
    w = np.where(labels == 1, class_weight, 1.0)
    return float(np.mean(w * (np.logaddexp(0.0, logits) - labels * logits)))


def loss_and_grads(
    model: EmbeddingModel, codes: np.ndarray, labels: np.ndarray, class_weight: float = 1.0
) -> tuple[float, list[np.ndarray]]:
    """Loss and its gradient for every array in ``model.parameters()``."""
    codes = _check_codes(model, codes)
    labels = np.asarray(labels, dtype=np.float64)
    n = codes.shape[0]
    emb = lookup(model, codes)
    pre, acts = _dense_forward(model, emb)
    logits = acts[-1][:, 0]
    loss = weighted_bce(logits, labels, class_weight)

    w = np.where(labels == 1, class_weight, 1.0)
    sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
    delta = (w * (sig - labels) / n)[:, None]
    dense_grads = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0.0)
        dense_grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        delta = delta @ layer.weight.T
    dense_grads.reverse()

    grads = []
    col = 0
    for f, table in enumerate(model.embeddings):
        d = table.shape[1]
        g = np.zeros_like(table)
        kernels.scatter_add_rows(g, codes[:, f], np.ascontiguousarray(delta[:, col : col + d]))
        grads.append(g)
        col += d
    for gw, gb in dense_grads:
        grads += [gw, gb]
    return loss, grads


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def resolve_class_weight(labels: np.ndarray, config: TrainConfig) -> float:
    if config.class_weight is not None:
        return float(config.class_weight)
    n_pos = int(np.sum(labels == 1))
    return (len(labels) - n_pos) / n_pos


def train(
    model: EmbeddingModel, dataset: EncodedDataset, config: Optional[TrainConfig] = None
) -> tuple[EmbeddingModel, list[float]]:
    """Mini-batch training; returns a trained copy and the mean loss of each epoch.

    Each epoch reshuffles with the seeded generator; every training cell is
    replaced by the UNKNOWN code with probability ``p_unknown`` so that row 0 of
    each table is learned too.
    """
    config = config or model.config
    n = len(dataset)
    if n == 0:
        raise TrainingError("training set is empty")
    labels = dataset.labels
    if len(np.unique(labels)) < 2:
        raise TrainingError("training set contains a single class")
    weight = resolve_class_weight(labels, config)
    model = model.copy()
    model.config = config
    params = model.parameters()
    if config.optimizer == "adam":
        opt = _Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    else:
        opt = _Sgd(config.learning_rate)
    # distinct stream from the initialisation stream
    rng = np.random.default_rng([config.seed, 1])
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            codes = dataset.codes[rows].copy()
            if config.p_unknown > 0:
                codes[rng.random(codes.shape) < config.p_unknown] = 0
            loss, grads = loss_and_grads(model, codes, labels[rows], weight)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}")
            opt.step(params, grads)
            total += loss * len(rows)
        trace.append(total / n)
        if not all(np.isfinite(p).all() for p in params):
            raise TrainingError(f"non-finite parameters after epoch {epoch + 1}")
    return model, trace


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
