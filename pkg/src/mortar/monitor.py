"""Safety prediction model wrapper and the classification/regression metrics used to score it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from mortar import neuralnet
from mortar.envsim import EnvKind
from mortar.neuralnet import Mlp


@dataclass(frozen=True)
class PredictionModel:
    """Predicts the episode STL score from a (state features, action) pair.

    Input layout is state features first, then the action, matching the
    dataset column order.
    """

    mlp: Mlp
    kind: EnvKind
    n_state: int
    psi_thres: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnvKind(self.kind))
        if self.psi_thres < 0:
            raise ValueError("psi_thres must be non-negative")
        if not 0 < self.n_state < self.mlp.n_in:
            raise ValueError(
                f"n_state={self.n_state} leaves no action inputs for a {self.mlp.n_in}-input net"
            )

    @property
    def n_action(self) -> int:
        return self.mlp.n_in - self.n_state

    def _join(self, state, action) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64).reshape(-1)
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if state.size != self.n_state or action.size != self.n_action:
            raise ValueError(
                f"expected {self.n_state} state and {self.n_action} action values, "
                f"got {state.size} and {action.size}"
            )
        return np.concatenate([state, action])

    def predict(self, state, action) -> float:
        return neuralnet.forward(self.mlp, self._join(state, action))

    def value_and_grad_action(self, state, action) -> tuple[float, np.ndarray]:
        """Prediction and its gradient with respect to the action block only."""
        value, grad = neuralnet.value_and_grad_input(self.mlp, self._join(state, action))
        return value, grad[self.n_state:]

    def predict_batch(self, inputs) -> np.ndarray:
        return neuralnet.forward_batch(self.mlp, inputs)


def predict(model: PredictionModel, state, action) -> float:
    return model.predict(state, action)


def is_safe(psi: float, psi_thres: float = 0.0) -> bool:
    return psi >= psi_thres


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class ModelMetrics:
    accuracy: float
    f1: float
    mse: float
    auc: float

    def csv_row(self, env: str, policy: str, seed) -> str:
        return f"{env},{policy},{seed},{self.accuracy!r},{self.f1!r},{self.mse!r},{self.auc!r}"


METRICS_HEADER = "env,policy,seed,accuracy,f1,mse,auc"


def f1_score(labels: np.ndarray, predicted: np.ndarray) -> float:
    labels = np.asarray(labels, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    tp = int(np.sum(labels & predicted))
    fp = int(np.sum(~labels & predicted))
    fn = int(np.sum(labels & ~predicted))
    if tp == 0:
        return 0.0
    # harmonic mean of precision and recall, in integer-count form
    return 2 * tp / (2 * tp + fp + fn)


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties; 0.5 when a class is empty."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def metrics_from_predictions(predicted, truth, psi_thres: float = 0.0) -> ModelMetrics:
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.size == 0:
        raise ValueError("empty test set")
    if predicted.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    labels = truth >= 0
    guessed = predicted >= psi_thres
    accuracy = float(np.mean(labels == guessed))
    # correctly rounded sum, so the value does not depend on summation order
    mse = math.fsum((predicted - truth) ** 2) / predicted.size
    return ModelMetrics(accuracy, f1_score(labels, guessed), mse, auc_score(labels, predicted))


def evaluate(model: PredictionModel, inputs, scores, psi_thres: float | None = None) -> ModelMetrics:
    thres = model.psi_thres if psi_thres is None else psi_thres
    return metrics_from_predictions(model.predict_batch(inputs), scores, thres)
