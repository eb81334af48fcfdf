"""Desk-scale models with flat parameter vectors.

Two architectures: a softmax-linear classifier and a one-hidden-layer relu
MLP.  Parameters live in a single flat float64 vector so the whole federation
protocol (pseudo-gradients, aggregation, checkpoints) is plain vector
arithmetic.  Layouts:

* softmax_linear: ``W (c, d)`` row-major, then bias ``(c,)``
* mlp_one_hidden: ``W1 (h, d)``, ``b1 (h,)``, ``W2 (c, h)``, ``b2 (c,)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

MODEL_KINDS = ("softmax_linear", "mlp_one_hidden")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    num_classes: int
    features: int
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidParameterError(
                f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if int(self.num_classes) < 2:
            raise InvalidParameterError("model needs at least 2 classes")
        if int(self.features) < 1:
            raise InvalidParameterError("model needs at least 1 feature")
        if self.kind == "mlp_one_hidden" and int(self.hidden) < 1:
            raise InvalidParameterError("mlp_one_hidden needs hidden >= 1")

    @property
    def param_dim(self) -> int:
        c, d, h = self.num_classes, self.features, self.hidden
        if self.kind == "softmax_linear":
            return c * d + c
        return h * d + h + c * h + c


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Initial flat parameter vector.

    The linear model starts at zero.  The MLP needs broken symmetry: both
    weight matrices are seeded normal draws scaled by sqrt(2/fan_in), biases
    zero.
    """
    if spec.kind == "softmax_linear":
        return np.zeros(spec.param_dim)
    c, d, h = spec.num_classes, spec.features, spec.hidden
    rng = np.random.default_rng(int(seed))
    w = np.zeros(spec.param_dim)
    o1 = h * d
    o2 = o1 + h
    o3 = o2 + c * h
    w[:o1] = rng.standard_normal(o1) * np.sqrt(2.0 / d)
    w[o2:o3] = rng.standard_normal(c * h) * np.sqrt(2.0 / h)
    return w


def model_scores(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """(N, c) class scores (pre-softmax logits)."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.param_dim,):
        raise InvalidParameterError(
            f"parameter vector has shape {params.shape}, expected ({spec.param_dim},)")
    x = np.asarray(features, dtype=np.float64)
    c, d = spec.num_classes, spec.features
    if spec.kind == "softmax_linear":
        w = params[:c * d].reshape(c, d)
        b = params[c * d:]
        return x @ w.T + b
    h = spec.hidden
    o1 = h * d
    o2 = o1 + h
    o3 = o2 + c * h
    w1 = params[:o1].reshape(h, d)
    b1 = params[o1:o2]
    w2 = params[o2:o3].reshape(c, h)
    b2 = params[o3:]
    return np.maximum(x @ w1.T + b1, 0.0) @ w2.T + b2


def predict(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Argmax class per sample; score ties resolve to the lowest class index."""
    return np.argmax(model_scores(spec, params, features), axis=1)


def batch_loss(spec: ModelSpec, params: np.ndarray, features: np.ndarray,
               labels: np.ndarray) -> float:
    """Mean cross-entropy of the softmax over model scores."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = model_scores(spec, params, features)
    scores = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(scores).sum(axis=1))
    return float(np.mean(log_z - scores[np.arange(labels.size), labels]))


def save_params(path, params: np.ndarray) -> None:
    """Checkpoint: a `shape,<n>` header line, then the flat values as CSV."""
    params = np.asarray(params, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"shape,{params.size}\n")
        fh.write(",".join(repr(float(v)) for v in params) + "\n")


def load_params(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 2 or header[0] != "shape":
            raise InvalidParameterError(f"{path}: not a checkpoint file")
        n = int(header[1])
        values = np.array([float(v) for v in fh.readline().strip().split(",")])
    if values.size != n:
        raise InvalidParameterError(
            f"{path}: header says {n} values, found {values.size}")
    return values
