"""Softmax classifiers (linear and one-hidden-layer tanh MLP) with closed-form
per-example gradients.

Parameters are stored as one flat float64 vector. Layout, in order:

* linear: ``W (D, K)`` row-major, ``b (K,)``
* mlp:    ``W1 (D, H)``, ``b1 (H,)``, ``W2 (H, K)``, ``b2 (K,)``
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, ValidationError

KINDS = ("linear", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_categories: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if self.num_categories < 2:
            raise ValidationError("num_categories must be >= 2")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ValidationError("mlp needs hidden_dim >= 1")

    @property
    def num_params(self) -> int:
        d, k, h = self.input_dim, self.num_categories, self.hidden_dim
        if self.kind == "linear":
            return d * k + k
        return d * h + h + h * k + k


@dataclass(frozen=True, eq=False)
class Model:
    spec: ModelSpec
    params: np.ndarray = field(repr=False)

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (self.spec.num_params,):
            raise ValidationError(
                f"expected {self.spec.num_params} params, got shape {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise NumericError("model parameters must be finite")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def with_params(self, params: np.ndarray) -> "Model":
        return Model(self.spec, params)


def _unpack(model: Model):
    s, p = model.spec, model.params
    d, k = s.input_dim, s.num_categories
    if s.kind == "linear":
        return p[: d * k].reshape(d, k), p[d * k :]
    h = s.hidden_dim
    o = 0
    w1 = p[o : o + d * h].reshape(d, h); o += d * h
    b1 = p[o : o + h]; o += h
    w2 = p[o : o + h * k].reshape(h, k); o += h * k
    return w1, b1, w2, p[o:]


def init_model(spec: ModelSpec, seed: int | np.random.Generator = 0) -> Model:
    """Glorot-uniform weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=fan_in * fan_out)

    d, k, h = spec.input_dim, spec.num_categories, spec.hidden_dim
    if spec.kind == "linear":
        parts = [glorot(d, k), np.zeros(k)]
    else:
        parts = [glorot(d, h), np.zeros(h), glorot(h, k), np.zeros(k)]
    return Model(spec, np.concatenate(parts))


def _check_batch(model: Model, features, labels=None):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ValidationError(
            f"features must have {model.spec.input_dim} columns, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input features")
    if labels is None:
        return x, None
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) != len(x) or len(y) == 0:
        raise ValidationError("batch must have matching, non-zero feature/label counts")
    if y.min() < 0 or y.max() >= model.spec.num_categories:
        raise ValidationError("label outside [0, num_categories)")
    return x, y


def _logits(model: Model, x: np.ndarray):
    if model.spec.kind == "linear":
        w, b = _unpack(model)
        return x @ w + b, None
    w1, b1, w2, b2 = _unpack(model)
    hidden = np.tanh(x @ w1 + b1)
    return hidden @ w2 + b2, hidden


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logits(model: Model, features) -> np.ndarray:
    x, _ = _check_batch(model, features)
    return _logits(model, x)[0]


def forward(model: Model, features) -> np.ndarray:
    """Class probabilities; a 1-D input gives a 1-D output."""
    single = np.ndim(features) == 1
    x, _ = _check_batch(model, features)
    probs = _softmax(_logits(model, x)[0])
    return probs[0] if single else probs


def per_example_losses(model: Model, features, labels) -> np.ndarray:
    x, y = _check_batch(model, features, labels)
    z, _ = _logits(model, x)
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    return lse - z[np.arange(len(y)), y]


def loss(model: Model, features, labels) -> float:
    """Mean cross-entropy."""
    return float(per_example_losses(model, features, labels).mean())


def per_example_grads(model: Model, features, labels) -> np.ndarray:
    """Row ``i`` is the gradient of example ``i``'s loss w.r.t. the flat params."""
    x, y = _check_batch(model, features, labels)
    z, hidden = _logits(model, x)
    delta = _softmax(z)
    delta[np.arange(len(y)), y] -= 1.0
    n = len(y)
    if model.spec.kind == "linear":
        gw = np.einsum("nd,nk->ndk", x, delta).reshape(n, -1)
        return np.concatenate([gw, delta], axis=1)
    _, _, w2, _ = _unpack(model)
    gw2 = np.einsum("nh,nk->nhk", hidden, delta).reshape(n, -1)
    dz = (delta @ w2.T) * (1.0 - hidden * hidden)
    gw1 = np.einsum("nd,nh->ndh", x, dz).reshape(n, -1)
    return np.concatenate([gw1, dz, gw2, delta], axis=1)


def grad(model: Model, features, labels) -> np.ndarray:
    return per_example_grads(model, features, labels).mean(axis=0)


def sgd_step(model: Model, g: np.ndarray, lr: float) -> Model:
    if not lr > 0:
        raise ValidationError("lr must be > 0")
    new = model.params - lr * np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(new)):
        raise NumericError("SGD step produced non-finite parameters")
    return model.with_params(new)


def predict(model: Model, features) -> np.ndarray:
    """Argmax class; ties go to the lowest index."""
    x, _ = _check_batch(model, features)
    return np.argmax(_logits(model, x)[0], axis=1)


def evaluate(model: Model, features, labels) -> float:
    y = np.asarray(labels).reshape(-1)
    if len(y) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    return float(np.mean(predict(model, features) == y))


def train_sgd(
    model: Model,
    features: np.ndarray,
    labels: np.ndarray,
    lr: float,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> Model:
    """Plain mini-batch SGD: each epoch reshuffles and walks ceil(n/B) batches."""
    n = len(labels)
    if batch_size < 1 or epochs < 0:
        raise ValidationError("batch_size must be >= 1 and epochs >= 0")
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            model = sgd_step(model, grad(model, features[idx], labels[idx]), lr)
    return model


# --------------------------------------------------------------------------- checkpoints

_MAGIC = b"DPFB"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIQ")


def save_model(model: Model, path: str | Path) -> None:
    """Write the binary checkpoint described in the README."""
    s = model.spec
    header = _HEADER.pack(
        _MAGIC, _VERSION, KINDS.index(s.kind), s.input_dim, s.hidden_dim,
        s.num_categories, s.num_params,
    )
    Path(path).write_bytes(header + model.params.astype("<f8").tobytes())


def load_model(path: str | Path) -> Model:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValidationError(f"{path}: truncated checkpoint header")
    magic, version, kind, d, h, k, n = _HEADER.unpack_from(blob)
    if magic != _MAGIC or version != _VERSION:
        raise ValidationError(f"{path}: not a dpflbench checkpoint (v{_VERSION})")
    if kind >= len(KINDS):
        raise ValidationError(f"{path}: unknown model kind code {kind}")
    spec = ModelSpec(KINDS[kind], d, k, h)
    body = blob[_HEADER.size :]
    if n != spec.num_params or len(body) != 8 * n:
        raise ValidationError(f"{path}: parameter block does not match header")
    return Model(spec, np.frombuffer(body, dtype="<f8").astype(np.float64))
