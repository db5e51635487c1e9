"""Classification quality: confusion matrix, accuracy, macro precision and
recall, and their harmonic-mean F1.

Macro averages run over the classes present in the true labels; a class
whose precision or recall denominator is empty contributes 0. F1 is the
harmonic mean of the two macro averages (0 when both vanish), so the four
values are well-defined for any non-empty evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .data import LabeledDataset


@dataclass(eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows = true class, cols = predicted
    class_count: int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.class_count, self.class_count):
            raise ValueError(f"counts shape {self.counts.shape} != ({self.class_count}, {self.class_count})")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsBundle:
    accuracy: float
    avg_precision: float
    avg_recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "avg_precision": self.avg_precision,
            "avg_recall": self.avg_recall,
            "f1": self.f1,
        }


def confusion(true_labels, predicted, class_count: int) -> ConfusionMatrix:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if len(true_labels) != len(predicted):
        raise ValueError(f"label arrays differ in length: {len(true_labels)} vs {len(predicted)}")
    if len(true_labels) == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    for name, arr in (("true", true_labels), ("predicted", predicted)):
        if arr.min() < 0 or arr.max() >= class_count:
            raise ValueError(f"{name} label out of range")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted), 1)
    return ConfusionMatrix(counts=counts, class_count=class_count)


def compute_metrics(cm: ConfusionMatrix) -> MetricsBundle:
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(counts).astype(np.float64)
    row_sums = counts.sum(axis=1).astype(np.float64)
    col_sums = counts.sum(axis=0).astype(np.float64)
    present = row_sums > 0

    precision = np.divide(diag, col_sums, out=np.zeros_like(diag), where=col_sums > 0)
    recall = np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)

    avg_p = float(precision[present].mean())
    avg_r = float(recall[present].mean())
    f1 = 2.0 * avg_p * avg_r / (avg_p + avg_r) if (avg_p + avg_r) > 0 else 0.0
    return MetricsBundle(
        accuracy=float(diag.sum() / total),
        avg_precision=avg_p,
        avg_recall=avg_r,
        f1=float(f1),
    )


def bundle_from_predictions(true_labels, predicted, class_count: int) -> MetricsBundle:
    return compute_metrics(confusion(true_labels, predicted, class_count))


def evaluate_model(model, clean_test: LabeledDataset, triggered_test: LabeledDataset):
    """Bundles for one model on the clean and on the trigger-stamped test set."""
    if len(clean_test) != len(triggered_test):
        raise ValueError("clean and triggered test sets must have equal length")
    clean_pred = engine.predict_labels(model, clean_test)
    trig_pred = engine.predict_labels(model, triggered_test)
    return (
        bundle_from_predictions(clean_test.labels, clean_pred, clean_test.class_count),
        bundle_from_predictions(triggered_test.labels, trig_pred, triggered_test.class_count),
    )
