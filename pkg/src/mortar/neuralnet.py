"""Small tanh MLP in numpy: forward pass, input gradients, SGD training, JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class ModelFormatError(ValueError):
    pass


@dataclass
class Mlp:
    """Weights are stored (fan_out, fan_in); inputs are standardised before layer 0."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mu_x: np.ndarray
    sigma_x: np.ndarray
    activation: str = "tanh"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ModelFormatError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ModelFormatError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ModelFormatError(
                    f"layer {k} expects {w.shape[1]} inputs, previous layer gives "
                    f"{self.weights[k - 1].shape[0]}"
                )
        if self.weights[-1].shape[0] != 1:
            raise ModelFormatError("output layer must have a single unit")
        n_in = self.weights[0].shape[1]
        if self.mu_x.shape != (n_in,) or self.sigma_x.shape != (n_in,):
            raise ModelFormatError("normalisation vectors do not match the input size")
        if np.any(self.sigma_x <= 0):
            raise ModelFormatError("sigma_x must be strictly positive")

    @property
    def layers(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]


def init_mlp(layers: Sequence[int], seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases, identity normalisation."""
    if len(layers) < 2 or layers[-1] != 1 or min(layers) < 1:
        raise ValueError(f"bad layer sizes {list(layers)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layers[:-1], layers[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    n_in = layers[0]
    return Mlp(weights, biases, np.zeros(n_in), np.ones(n_in))


def fit_normalization(model: Mlp, inputs: np.ndarray) -> Mlp:
    x = np.asarray(inputs, dtype=np.float64)
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma[sigma <= 0] = 1.0
    model.mu_x = mu
    model.sigma_x = sigma
    return model


def _check_input(model: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_in:
        raise ValueError(f"expected {model.n_in} inputs, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def _forward_cache(model: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer for a batch ``x`` of shape (n, n_in)."""
    h = (x - model.mu_x) / model.sigma_x
    acts = [h]
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if k == last else np.tanh(z)
        acts.append(h)
    return acts


def forward(model: Mlp, x) -> float:
    x = _check_input(model, x)
    if x.ndim != 1:
        raise ValueError("forward takes a single input vector; use forward_batch")
    return float(_forward_cache(model, x[None, :])[-1][0, 0])


def forward_batch(model: Mlp, x) -> np.ndarray:
    x = _check_input(model, np.atleast_2d(x))
    return _forward_cache(model, x)[-1][:, 0]


def _backward(model: Mlp, acts: list[np.ndarray], dout: np.ndarray):
    """Back-propagate ``dout`` (n, 1); returns (grad wrt standardised input, dW, db)."""
    grads_w, grads_b = [], []
    delta = dout
    for k in range(len(model.weights) - 1, -1, -1):
        grads_w.append(delta.T @ acts[k])
        grads_b.append(delta.sum(axis=0))
        delta = delta @ model.weights[k]
        if k > 0:
            delta = delta * (1.0 - acts[k] ** 2)
    return delta, grads_w[::-1], grads_b[::-1]


def value_and_grad_input(model: Mlp, x) -> tuple[float, np.ndarray]:
    x = _check_input(model, x)
    acts = _forward_cache(model, x[None, :])
    dh, _, _ = _backward(model, acts, np.ones((1, 1)))
    return float(acts[-1][0, 0]), dh[0] / model.sigma_x


def grad_input(model: Mlp, x) -> np.ndarray:
    """Exact d(output)/d(input), through the input standardisation."""
    return value_and_grad_input(model, x)[1]


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 30
    batch: int = 256
    seed: int = 0
    momentum: float = 0.9  # 0 gives plain SGD

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch < 1:
            raise ValueError("batch size must be at least 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class TrainResult:
    model: Mlp
    loss_history: list[float]
    val_history: list[float]
    best_epoch: int


def mse(model: Mlp, inputs, targets) -> float:
    return float(np.mean((forward_batch(model, inputs) - targets) ** 2))


def _copy(model: Mlp) -> Mlp:
    return Mlp(
        [w.copy() for w in model.weights],
        [b.copy() for b in model.biases],
        model.mu_x.copy(),
        model.sigma_x.copy(),
        model.activation,
        dict(model.meta),
    )


def train(
    model: Mlp,
    inputs,
    targets,
    config: TrainConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    normalize: bool = True,
) -> TrainResult:
    """Minibatch (momentum) SGD on mean squared error.

    The model is trained in place. With ``validation`` given, the returned
    model is a snapshot from the epoch with the lowest validation MSE.
    ``loss_history`` holds the training MSE measured at the end of each epoch.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} targets")
    if len(x) < config.batch:
        raise ValueError(f"dataset of {len(x)} rows is smaller than batch {config.batch}")
    _check_input(model, x)
    if normalize:
        fit_normalization(model, x)

    rng = np.random.default_rng(config.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    history, val_history = [], []
    best, best_val, best_epoch = None, math.inf, config.epochs - 1
    n = len(x)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            acts = _forward_cache(model, x[idx])
            err = acts[-1][:, 0] - y[idx]
            dout = (2.0 / len(idx)) * err[:, None]
            _, gw, gb = _backward(model, acts, dout)
            for k in range(len(model.weights)):
                vel_w[k] = config.momentum * vel_w[k] - config.lr * gw[k]
                vel_b[k] = config.momentum * vel_b[k] - config.lr * gb[k]
                model.weights[k] += vel_w[k]
                model.biases[k] += vel_b[k]
        loss = mse(model, x, y)
        if not math.isfinite(loss):
            raise FloatingPointError(
                f"training diverged at epoch {epoch} (loss={loss}); lower the learning rate"
            )
        history.append(loss)
        if validation is not None:
            v = mse(model, *validation)
            val_history.append(v)
            if v < best_val:
                best, best_val, best_epoch = _copy(model), v, epoch
    if best is None:
        best = model
    return TrainResult(best, history, val_history, best_epoch)


# ---------------------------------------------------------------------------
# Serialisation


def to_document(model: Mlp) -> dict[str, Any]:
    return {
        "layers": model.layers,
        "activation": model.activation,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "mu_x": model.mu_x.tolist(),
        "sigma_x": model.sigma_x.tolist(),
        "meta": model.meta,
    }


def from_document(doc: dict[str, Any]) -> Mlp:
    try:
        layers = [int(n) for n in doc["layers"]]
        if len(doc["weights"]) != len(layers) - 1 or len(doc["biases"]) != len(layers) - 1:
            raise ModelFormatError("layer count disagrees with weights/biases")
        weights = []
        for k, flat in enumerate(doc["weights"]):
            arr = np.asarray(flat, dtype=np.float64)
            if arr.size != layers[k + 1] * layers[k]:
                raise ModelFormatError(
                    f"layer {k}: {arr.size} weights, expected {layers[k + 1]}x{layers[k]}"
                )
            weights.append(arr.reshape(layers[k + 1], layers[k]))
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        model = Mlp(
            weights,
            biases,
            np.asarray(doc["mu_x"], dtype=np.float64),
            np.asarray(doc["sigma_x"], dtype=np.float64),
            doc.get("activation", "tanh"),
            dict(doc.get("meta", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc!r}") from exc
    if model.layers != layers:
        raise ModelFormatError(f"declared layers {layers} but parameters give {model.layers}")
    params = model.weights + model.biases + [model.mu_x, model.sigma_x]
    if not all(np.all(np.isfinite(p)) for p in params):
        raise ModelFormatError("non-finite parameter")
    return model


def dumps(model: Mlp) -> str:
    return json.dumps(to_document(model), indent=1) + "\n"


def loads(text: str) -> Mlp:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    return from_document(doc)


def save(model: Mlp, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model))


def load(path) -> Mlp:
    with open(path) as fh:
        return loads(fh.read())
