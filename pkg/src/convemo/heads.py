"""Prediction heads and training losses.

One two-layer perceptron with a tanh hidden layer feeds either a softmax
over emotion classes or a linear 4-dim output for the continuous
valence/arousal/expectancy/power scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .params import ParameterBag, uniform_init

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
CONTINUOUS_DIM_NAMES = ("valence", "arousal", "expectancy", "power")


class ConfigError(ValueError):
    """Head kind, parameters, and labels do not agree."""


@dataclass
class Prediction:
    """Model output for a single utterance.

    probs/values hold plain arrays for reporting; scores keeps the graph
    tensor (logits or raw values) so losses stay differentiable.
    """

    kind: str
    scores: Tensor
    probs: np.ndarray | None = None
    predicted_class: int | None = None
    values: np.ndarray | None = None


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


class Discriminator:
    """Two-layer perceptron head over the fused representation."""

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_h: int,
        kind: str,
        num_classes: int,
        rng: np.random.Generator,
    ):
        if kind not in (CATEGORICAL, CONTINUOUS):
            raise ConfigError(f"head kind must be categorical or continuous, got {kind!r}")
        self.kind = kind
        self.d_h = d_h
        out_dim = num_classes if kind == CATEGORICAL else len(CONTINUOUS_DIM_NAMES)
        if kind == CATEGORICAL and num_classes < 2:
            raise ConfigError(f"categorical head needs >= 2 classes, got {num_classes}")
        self.num_classes = num_classes if kind == CATEGORICAL else None
        self.w_hidden = bag.add(f"{prefix}.w_hidden", uniform_init(rng, (d_h, d_h), d_h))
        self.w_out = bag.add(f"{prefix}.w_out", uniform_init(rng, (out_dim, d_h), d_h))

    def predict(self, u: Tensor) -> Prediction:
        if u.data.shape != (self.d_h,):
            raise DimensionError(f"head input shape {u.data.shape}, expected ({self.d_h},)")
        hidden = ad.tanh(ad.matmul(self.w_hidden, u))
        scores = ad.matmul(self.w_out, hidden)
        if self.kind == CATEGORICAL:
            probs = _softmax(scores.data)
            # np.argmax breaks ties toward the lowest index, as required.
            return Prediction(
                kind=CATEGORICAL,
                scores=scores,
                probs=probs,
                predicted_class=int(np.argmax(probs)),
            )
        return Prediction(kind=CONTINUOUS, scores=scores, values=scores.data.copy())

    def loss(self, predictions: list[Prediction], labels: list) -> Tensor:
        """Mean loss over utterances: negative log-likelihood for classes,
        squared error averaged over the 4 dims for continuous labels."""
        if not predictions or len(predictions) != len(labels):
            raise ConfigError(f"{len(predictions)} predictions vs {len(labels)} labels")
        for p in predictions:
            if p.kind != self.kind:
                raise ConfigError(f"prediction kind {p.kind} under a {self.kind} head")
        stacked = ad.stack_rows([p.scores for p in predictions])
        if self.kind == CATEGORICAL:
            return ad.cross_entropy_logits(stacked, [int(y) for y in labels])
        target = np.asarray(labels, dtype=np.float64)
        return ad.squared_error(stacked, target)


def prediction_loss(predictions: list[Prediction], labels: list, kind: str) -> float:
    """Loss value straight from prediction outputs, outside the graph.

    Equals Discriminator.loss on the same predictions but accepts arbitrary
    probability vectors, e.g. exact one-hots. True-class probabilities
    below 1e-300 are clamped and flagged in the logs.
    """
    if not predictions or len(predictions) != len(labels):
        raise ConfigError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if kind == CATEGORICAL:
        total = 0.0
        clamped = 0
        for p, y in zip(predictions, labels):
            prob = float(p.probs[int(y)])
            if prob < 1e-300:
                prob = 1e-300
                clamped += 1
            total += -np.log(prob)
        if clamped:
            ad.log.warning("loss clamped %d utterances with true-class prob < 1e-300", clamped)
        return total / len(predictions)
    if kind == CONTINUOUS:
        target = np.asarray(labels, dtype=np.float64)
        values = np.stack([p.values for p in predictions])
        if values.shape != target.shape:
            raise DimensionError(f"prediction values {values.shape} vs labels {target.shape}")
        return float(((values - target) ** 2).mean())
    raise ConfigError(f"unknown head kind {kind!r}")
