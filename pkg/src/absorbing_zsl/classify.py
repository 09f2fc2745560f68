"""Predictions from absorption scores and the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.stats import rankdata

from . import _jsonfmt
from .chain import AbsorptionResult
from .errors import DegenerateLabels, DimensionMismatch, EmptyClass, EmptyScores, UnknownLabel


def predict(scores: AbsorptionResult) -> list[str]:
    """Arg-max unseen class per row; ties go to the lower column index."""
    S = scores.scores
    if S.shape[1] == 0:
        raise EmptyScores("no unseen classes to predict")
    if S.shape[0] == 0:
        return []
    names = scores.unseen_names
    return [names[j] for j in np.argmax(S, axis=1)]


def auc_binary(scores, positives) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Equals the fraction of (positive, negative) pairs where the positive
    scores higher, with ties counted as one half. Computed from mid-ranks,
    so the numerator is an exact multiple of 1/2.
    """
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positives, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise DimensionMismatch(f"scores {s.shape} and labels {pos.shape} must be equal-length vectors")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_class_auc(scores: AbsorptionResult, truth: Sequence[str]) -> dict[str, float]:
    """One-vs-rest AUC of each unseen class's score column over all images."""
    S = scores.scores
    truth = np.asarray(truth, dtype=object)
    if truth.shape[0] != S.shape[0]:
        raise DimensionMismatch(f"{truth.shape[0]} labels for {S.shape[0]} scored images")
    return {
        name: auc_binary(S[:, j], truth == name) for j, name in enumerate(scores.unseen_names)
    }


def mean_class_accuracy(
    predictions: Sequence[str], truth: Sequence[str], classes: Sequence[str]
) -> float:
    """Macro-averaged accuracy: mean over classes of within-class accuracy."""
    if len(predictions) != len(truth):
        raise DimensionMismatch(f"{len(predictions)} predictions for {len(truth)} labels")
    known = set(classes)
    unknown = sorted({t for t in truth} - known)
    if unknown:
        raise UnknownLabel(f"truth labels outside the class list: {unknown}")
    pred = np.asarray(predictions, dtype=object)
    true = np.asarray(truth, dtype=object)
    accs = []
    for c in classes:
        mask = true == c
        if not mask.any():
            raise EmptyClass(f"class {c!r} never appears in the truth labels")
        accs.append(np.mean(pred[mask] == c))
    return float(np.mean(accs))


@dataclass
class ScoreReport:
    method: str
    K: int
    predictions: list[str]
    per_class_auc: dict[str, float | None]
    mean_auc: float | None
    mean_class_accuracy: float | None
    timings: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, object] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "method": self.method,
            "K": self.K,
            "predictions": list(self.predictions),
            "per_class_auc": dict(self.per_class_auc),
            "mean_auc": self.mean_auc,
            "mean_class_accuracy": self.mean_class_accuracy,
        }
        if include_timings:
            d["timings"] = dict(self.timings)
        if self.metadata:
            d["metadata"] = dict(self.metadata)
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return _jsonfmt.dumps(self.to_dict(include_timings))

    def dump(self, fh: IO[str]) -> None:
        fh.write(self.to_json() + "\n")


def evaluate(
    scores: AbsorptionResult,
    truth: Sequence[str],
    method: str = "amp",
    K: int = 0,
    timings: dict[str, float] | None = None,
    metadata: dict[str, object] | None = None,
) -> ScoreReport:
    predictions = predict(scores)
    aucs = per_class_auc(scores, truth)
    return ScoreReport(
        method=method,
        K=K,
        predictions=predictions,
        per_class_auc=aucs,
        mean_auc=float(np.mean(list(aucs.values()))),
        mean_class_accuracy=mean_class_accuracy(predictions, truth, scores.unseen_names),
        timings=dict(timings or {}),
        metadata=dict(metadata or {}),
    )
