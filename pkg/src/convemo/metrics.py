"""Weighted accuracy, weighted F1, and Pearson correlation.

Per-class accuracy is per-class recall, and the weighted averages use
class support as weights. Support-weighted accuracy coincides with micro
accuracy; both are reported so the equality stays visible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .heads import CONTINUOUS_DIM_NAMES


class MetricError(ValueError):
    """Inputs do not admit the requested statistic."""


@dataclass
class ClassScore:
    accuracy: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_class: dict[int, ClassScore]
    weighted_acc: float
    weighted_f1: float
    micro_acc: float
    pearson: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        out = {}
        if self.per_class or math.isfinite(self.weighted_acc):
            out = {
                "weighted_acc": self.weighted_acc,
                "weighted_f1": self.weighted_f1,
                "micro_acc": self.micro_acc,
                "per_class": {
                    str(c): {"accuracy": s.accuracy, "f1": s.f1, "support": s.support}
                    for c, s in sorted(self.per_class.items())
                },
            }
        if self.pearson is not None:
            out["pearson"] = {
                name: float(r) for name, r in zip(CONTINUOUS_DIM_NAMES, self.pearson)
            }
        return out

    def format_table(self) -> str:
        lines = []
        if self.per_class or math.isfinite(self.weighted_acc):
            lines.append(f"{'class':>8} {'acc':>8} {'f1':>8} {'support':>8}")
            for c, s in sorted(self.per_class.items()):
                lines.append(f"{c:>8} {s.accuracy:>8.4f} {s.f1:>8.4f} {s.support:>8}")
            lines.append(
                f"{'weighted':>8} {self.weighted_acc:>8.4f} {self.weighted_f1:>8.4f} "
                f"{sum(s.support for s in self.per_class.values()):>8}"
            )
        if self.pearson is not None:
            pairs = ", ".join(
                f"{name}={float(r):.4f}" for name, r in zip(CONTINUOUS_DIM_NAMES, self.pearson)
            )
            lines.append(f"pearson: {pairs}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def weighted_scores(preds: list[int], labels: list[int]) -> EvalReport:
    """Per-class recall and F1 with support-weighted averages.

    Classes that are only predicted, never labeled, appear with support 0
    and therefore weight 0; a zero precision + recall sum yields F1 = 0.
    """
    if len(preds) != len(labels) or not labels:
        raise MetricError(f"{len(preds)} predictions vs {len(labels)} labels")
    p = np.asarray(preds, dtype=np.intp)
    y = np.asarray(labels, dtype=np.intp)
    classes = sorted(set(p.tolist()) | set(y.tolist()))
    per_class: dict[int, ClassScore] = {}
    total = y.size
    weighted_acc = 0.0
    weighted_f1 = 0.0
    for c in classes:
        tp = int(np.sum((p == c) & (y == c)))
        fp = int(np.sum((p == c) & (y != c)))
        fn = int(np.sum((p != c) & (y == c)))
        support = tp + fn
        recall = tp / support if support else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = ClassScore(accuracy=recall, f1=f1, support=support)
        weighted_acc += support / total * recall
        weighted_f1 += support / total * f1
    micro_acc = float(np.mean(p == y))
    return EvalReport(
        per_class=per_class,
        weighted_acc=weighted_acc,
        weighted_f1=weighted_f1,
        micro_acc=micro_acc,
    )


def pearson_r(preds, labels) -> float:
    """Sample Pearson correlation; undefined when either input is constant."""
    x = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise MetricError(f"need two equal-length series of >= 2 values, got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        raise MetricError("correlation undefined for a zero-variance series")
    return float((xc * yc).sum() / (sx * sy))


def pearson_by_dim(preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Pearson correlation per continuous emotion dimension (4 values)."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 2 or p.shape[1] != len(CONTINUOUS_DIM_NAMES):
        raise MetricError(f"need (n, 4) arrays, got {p.shape} and {y.shape}")
    return np.array([pearson_r(p[:, j], y[:, j]) for j in range(p.shape[1])])
