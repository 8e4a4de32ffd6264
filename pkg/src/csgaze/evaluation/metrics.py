"""Classification metrics and the report container."""

from __future__ import annotations

import json
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np


@dataclass
class MetricsReport:
    class_names: List[str]
    f1: List[float]
    macro_f1: float
    accuracy: float
    confusion: List[List[int]]
    n_samples: int
    degenerate_classes: List[str] = field(default_factory=list)
    average_precision: Optional[float] = None
    ap_mean: Optional[float] = None
    ap_std: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "f1": [round(float(v), 10) for v in self.f1],
            "macro_f1": round(float(self.macro_f1), 10),
            "accuracy": round(float(self.accuracy), 10),
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "n_samples": int(self.n_samples),
            "degenerate_classes": list(self.degenerate_classes),
            "average_precision": None if self.average_precision is None
            else round(float(self.average_precision), 10),
            "ap_mean": None if self.ap_mean is None else round(float(self.ap_mean), 10),
            "ap_std": None if self.ap_std is None else round(float(self.ap_std), 10),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        width = max(len(n) for n in self.class_names + ["macro F1"])
        lines = [f"{'class':<{width}}  F1"]
        lines += [f"{n:<{width}}  {v:.4f}" for n, v in zip(self.class_names, self.f1)]
        lines.append(f"{'macro F1':<{width}}  {self.macro_f1:.4f}")
        lines.append(f"{'accuracy':<{width}}  {self.accuracy:.4f}")
        if self.average_precision is not None:
            lines.append(f"{'AP':<{width}}  {self.average_precision:.4f}")
        return "\n".join(lines) + "\n"


def _check_lengths(predictions, labels):
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"predictions and labels differ in shape: {p.shape} vs {y.shape}")
    return p, y


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    p, y = _check_lengths(predictions, labels)
    if len(y) and (y.min() < 0 or y.max() >= n_classes or p.min() < 0 or p.max() >= n_classes):
        raise ValueError("class index out of range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def f1_per_class(predictions, labels, n_classes: int, return_degenerate: bool = False):
    """F1 per class; a class with no true or predicted samples scores 0."""
    cm = confusion_matrix(predictions, labels, n_classes)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    if return_degenerate:
        return f1, [int(c) for c in np.flatnonzero(denom == 0)]
    return f1


def accuracy(predictions, labels) -> float:
    p, y = _check_lengths(predictions, labels)
    if len(y) == 0:
        raise ValueError("no samples")
    return float(np.mean(p == y))


def average_precision(scores, labels) -> float:
    """Non-interpolated area under the precision-recall curve.

    Ranks by descending score; ties keep input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in shape")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


def ap_over_runs(run_fn: Callable[[int], float], runs: int = 100,
                 executor: Executor = None) -> tuple:
    """Mean and population std of ``run_fn(seed)`` over seeds ``0..runs-1``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    values = [None] * runs

    def _one(i):
        try:
            return float(run_fn(i))
        except Exception as e:
            raise RuntimeError(f"run {i} failed: {e}") from e

    if executor is None:
        for i in range(runs):
            values[i] = _one(i)
    else:
        futures = [executor.submit(_one, i) for i in range(runs)]
        for i, fut in enumerate(futures):
            values[i] = fut.result()
    v = np.asarray(values)
    return float(v.mean()), float(v.std())


def subsample_ap_run(scores, labels, fraction: float = 0.8) -> Callable[[int], float]:
    """Run function for :func:`ap_over_runs`: AP on a seeded subsample.

    The subsample always keeps at least one positive.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n = max(1, int(round(fraction * len(s))))

    def run(seed: int) -> float:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(s), size=n, replace=False))
        if not y[idx].any():
            pos = np.flatnonzero(y)
            idx = np.sort(np.append(idx[1:], pos[rng.integers(len(pos))]))
        return average_precision(s[idx], y[idx])

    return run


def metrics_report(predictions, labels, class_names: Sequence[str],
                   positive_scores=None) -> MetricsReport:
    """Full report; ``positive_scores`` adds AP for a binary task."""
    n = len(class_names)
    cm = confusion_matrix(predictions, labels, n)
    f1, degenerate = f1_per_class(predictions, labels, n, return_degenerate=True)
    ap = None
    if positive_scores is not None and np.any(np.asarray(labels) == 1):
        ap = average_precision(positive_scores, np.asarray(labels) == 1)
    return MetricsReport(
        class_names=list(class_names),
        f1=[float(v) for v in f1],
        macro_f1=float(f1.mean()),
        accuracy=float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0,
        confusion=cm.tolist(),
        n_samples=int(cm.sum()),
        degenerate_classes=[class_names[c] for c in degenerate],
        average_precision=ap,
    )


def report_from_probabilities(probabilities, labels, class_names: Sequence[str]) -> MetricsReport:
    p = np.asarray(probabilities, dtype=np.float64)
    scores = p[:, 1] if p.shape[1] == 2 else None
    return metrics_report(p.argmax(axis=1), labels, class_names, positive_scores=scores)
