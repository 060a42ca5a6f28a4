"""Evaluation metrics and their CSV rendering."""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score

from .exceptions import ContractViolation

logger = logging.getLogger(__name__)


def _check(predictions, labels, op: str):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ContractViolation(f"{op}: {predictions.shape} predictions for {labels.shape} labels")
    if labels.size == 0:
        raise ContractViolation(f"{op}: empty input")
    return predictions, labels


def _num_classes(predictions, labels, num_classes):
    return int(max(predictions.max(), labels.max()) + 1) if num_classes is None else num_classes


def per_class_f1(predictions, labels, num_classes: int = None) -> np.ndarray:
    """F1 per class id 0..K-1; 0 where precision + recall is 0."""
    predictions, labels = _check(predictions, labels, "per_class_f1")
    k = _num_classes(predictions, labels, num_classes)
    return f1_score(labels, predictions, labels=list(range(k)), average=None, zero_division=0)


def wf1(predictions, labels, num_classes: int = None) -> float:
    """Support-weighted F1; classes absent from ``labels`` carry zero weight."""
    predictions, labels = _check(predictions, labels, "wf1")
    k = _num_classes(predictions, labels, num_classes)
    return float(f1_score(labels, predictions, labels=list(range(k)), average="weighted", zero_division=0))


def confusion(predictions, labels, num_classes: int = None) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    predictions, labels = _check(predictions, labels, "confusion")
    k = _num_classes(predictions, labels, num_classes)
    return confusion_matrix(labels, predictions, labels=list(range(k)))


def memorization_rate(predictions, noisy_labels, noise_mask) -> float:
    """Share of flipped samples predicted as their flipped label; 0.0 when nothing was flipped."""
    predictions = np.asarray(predictions, dtype=np.int64)
    noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
    noise_mask = np.asarray(noise_mask, dtype=bool)
    if not predictions.shape == noisy_labels.shape == noise_mask.shape:
        raise ContractViolation("memorization_rate: predictions, labels and mask must align")
    if not noise_mask.any():
        return 0.0
    return float(np.mean(predictions[noise_mask] == noisy_labels[noise_mask]))


def branch_agreement(hgnn_predictions, pathnn_predictions) -> float:
    a = np.asarray(hgnn_predictions, dtype=np.int64)
    b = np.asarray(pathnn_predictions, dtype=np.int64)
    if a.shape != b.shape or a.size == 0:
        raise ContractViolation("branch_agreement: prediction vectors must align and be non-empty")
    return float(np.mean(a == b))


def metrics_header(num_classes: int) -> list:
    return (["epoch", "wf1"] + [f"f1_class{k}" for k in range(num_classes)]
            + ["memorization_rate", "branch_agreement", "L_D", "L_adv", "L_couple", "L_cls"])


@dataclass
class MetricsReport:
    per_class_f1: np.ndarray
    wf1: float
    confusion: np.ndarray
    memorization_rate: float = 0.0
    branch_agreement: float = 1.0
    epoch: int = 0
    losses: dict = field(default_factory=lambda: {"L_D": 0.0, "L_adv": 0.0, "L_couple": 0.0, "L_cls": 0.0})

    @property
    def num_classes(self) -> int:
        return int(self.per_class_f1.shape[0])

    def csv_row(self) -> list:
        return ([self.epoch, repr(float(self.wf1))] + [repr(float(f)) for f in self.per_class_f1]
                + [repr(float(self.memorization_rate)), repr(float(self.branch_agreement))]
                + [repr(float(self.losses[key])) for key in ("L_D", "L_adv", "L_couple", "L_cls")])

    def as_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "wf1": float(self.wf1),
            "per_class_f1": [float(f) for f in self.per_class_f1],
            "confusion": self.confusion.tolist(),
            "memorization_rate": float(self.memorization_rate),
            "branch_agreement": float(self.branch_agreement),
            "losses": {key: float(value) for key, value in self.losses.items()},
        }


def build_report(predictions, labels, num_classes: int, **extra) -> MetricsReport:
    return MetricsReport(
        per_class_f1=per_class_f1(predictions, labels, num_classes),
        wf1=wf1(predictions, labels, num_classes),
        confusion=confusion(predictions, labels, num_classes),
        **extra,
    )


def write_metrics_csv(reports, path, num_classes: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(metrics_header(num_classes))
        for report in reports:
            writer.writerow(report.csv_row())
    return path


def write_confusion_csv(report: MetricsReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["true\\predicted"] + [f"class{k}" for k in range(report.num_classes)])
        for k, row in enumerate(report.confusion):
            writer.writerow([f"class{k}"] + [int(v) for v in row])
    return path
