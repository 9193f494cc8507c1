"""Confusion matrices, per-class accuracy reports and feature export."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .synth import CLASS_NAMES

NUM_CLASSES = len(CLASS_NAMES)
CELL_PX = 32


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray

    def normalized(self):
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple
    mean: float

    def percent_rows(self):
        rows = [(name, f"{100 * acc:.1f}") for name, acc in zip(CLASS_NAMES, self.per_class)]
        return rows + [("Mean", f"{100 * self.mean:.1f}")]


def confusion_matrix(true, pred, num_classes=NUM_CLASSES):
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ValueError(f"{true.shape} labels vs {pred.shape} predictions")
    for name, arr in (("label", true), ("prediction", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} outside 0..{num_classes - 1}")
    flat = np.bincount(true * num_classes + pred, minlength=num_classes * num_classes)
    return ConfusionMatrix(flat.reshape(num_classes, num_classes))


def report_from(cm: ConfusionMatrix) -> EvalReport:
    rows = cm.counts.sum(axis=1)
    missing = [CLASS_NAMES[i] for i in np.flatnonzero(rows == 0)]
    if missing:
        raise ValueError(f"test set has no samples of {', '.join(missing)}; mean accuracy undefined")
    per_class = np.diag(cm.counts) / rows
    return EvalReport(tuple(float(a) for a in per_class), float(per_class.mean()))


def evaluate(classify, inputs, labels):
    """Run ``classify(inputs) -> predicted labels`` and summarize against ``labels``."""
    pred = np.asarray(classify(inputs))
    cm = confusion_matrix(labels, pred)
    return cm, report_from(cm)


def pair_accuracy(scores, labels, pair):
    """Accuracy on samples of the two ``pair`` classes, deciding between those two only."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    a, b = pair
    keep = (labels == a) | (labels == b)
    if not keep.any():
        raise ValueError("no samples of either class in the pair")
    pick = np.where(scores[keep, a] >= scores[keep, b], a, b)
    return float(np.mean(pick == labels[keep]))


def write_report_csv(report: EvalReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "accuracy"])
        writer.writerows(report.percent_rows())


def write_confusion_csv(cm: ConfusionMatrix, path, counts_path=None):
    """Row-normalized percentages to one decimal; optionally the raw counts too."""
    norm = cm.normalized()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred", *CLASS_NAMES])
        for name, row in zip(CLASS_NAMES, norm):
            writer.writerow([name, *(f"{100 * v:.1f}" for v in row)])
    if counts_path is not None:
        with open(counts_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred", *CLASS_NAMES])
            for name, row in zip(CLASS_NAMES, cm.counts):
                writer.writerow([name, *row.tolist()])


def read_confusion_counts(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return ConfusionMatrix(np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int64))


def write_features_csv(path, ids, labels, features):
    features = np.asarray(features)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label_code", *(f"f{i}" for i in range(features.shape[1]))])
        for sid, label, row in zip(ids, labels, features):
            writer.writerow([sid, int(label), *(repr(float(v)) for v in row)])


def confusion_pixels(cm: ConfusionMatrix, cell=CELL_PX):
    """Grayscale RGB raster, one ``cell x cell`` square per entry, white = 1."""
    gray = np.rint(255 * cm.normalized()).astype(np.uint8)
    big = np.kron(gray, np.ones((cell, cell), dtype=np.uint8))
    return np.repeat(big[..., None], 3, axis=2)


def render_confusion(cm: ConfusionMatrix, path, cell=CELL_PX):
    Image.fromarray(confusion_pixels(cm, cell), "RGB").save(path, format="PPM")
