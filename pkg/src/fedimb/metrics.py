"""Imbalanced-learning metrics for binary classifiers.

The positive class (label 1) is the minority class.  Metrics whose
denominator is empty are reported as ``None`` rather than 0 so that
averaging across rounds or stations cannot silently absorb them.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import sqrt
from typing import Optional

import numpy as np

from .diffnet import Network, bce_loss


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _binary(y, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.reshape(-1)
    if not np.isin(y, (0, 1)).all():
        raise ValueError(f"{name} contains non-binary labels")
    return y.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    y_true = _binary(y_true, "y_true")
    y_pred = _binary(y_pred, "y_pred")
    if y_true.size == 0:
        raise ValueError("empty input")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
    )


def sensitivity(cm: ConfusionMatrix) -> Optional[float]:
    """TP / (TP + FN), or None when there are no positives."""
    denom = cm.tp + cm.fn
    return cm.tp / denom if denom else None


def specificity(cm: ConfusionMatrix) -> Optional[float]:
    """TN / (TN + FP), or None when there are no negatives."""
    denom = cm.tn + cm.fp
    return cm.tn / denom if denom else None


def g_mean(cm: ConfusionMatrix) -> float:
    """Geometric mean of sensitivity and specificity; undefined factors count as 0."""
    sens = sensitivity(cm) or 0.0
    spec = specificity(cm) or 0.0
    return sqrt(sens * spec)


def accuracy(cm: ConfusionMatrix) -> float:
    return (cm.tp + cm.tn) / cm.total


def auc(scores, y_true) -> Optional[float]:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties credited 1/2.

    Returns None for single-class input.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _binary(y_true, "y_true")
    if scores.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    # tie groups share the mean of their 1-based ranks
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], x.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_curve(scores, y_true) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) points sweeping the threshold over distinct scores, high to low."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _binary(y_true, "y_true")
    order = np.argsort(-scores, kind="mergesort")
    s, yy = scores[order], y[order]
    last = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(yy)[last]
    fps = np.cumsum(1 - yy)[last]
    n_pos, n_neg = yy.sum(), yy.size - yy.sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    return np.r_[0.0, fps / n_neg], np.r_[0.0, tps / n_pos]


def auc_trapezoid(scores, y_true) -> float:
    fpr, tpr = roc_curve(scores, y_true)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def empirical_wasserstein_1d(a, b) -> float:
    """W1 distance between two empirical distributions on the line.

    For equal sample sizes this is the mean absolute difference of the
    sorted samples; otherwise the exact integral of |F_a - F_b|.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.concatenate([a, b])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    # integer counts over a common denominator: one rounding at the end
    # for integer-valued samples
    count_a = np.searchsorted(a, grid[:-1], side="right")
    count_b = np.searchsorted(b, grid[:-1], side="right")
    gap = np.abs(count_a * b.size - count_b * a.size)
    return float(np.sum(gap * widths) / (a.size * b.size))


@dataclass(frozen=True)
class MetricsReport:
    loss: float
    accuracy: float
    auc: Optional[float]
    g_mean: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    confusion: ConfusionMatrix


def report_from_scores(scores, y_true, threshold: float = 0.5) -> MetricsReport:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _binary(y_true, "y_true")
    if y.size == 0:
        raise ValueError("empty dataset")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    cm = confusion(y, (scores >= threshold).astype(np.int64))
    return MetricsReport(
        loss=float(bce_loss(scores.reshape(-1, 1), y.reshape(-1, 1)).value),
        accuracy=accuracy(cm),
        auc=auc(scores, y),
        g_mean=g_mean(cm),
        sensitivity=sensitivity(cm),
        specificity=specificity(cm),
        confusion=cm,
    )


def evaluate(net: Network, dataset, threshold: float = 0.5) -> MetricsReport:
    """Evaluate ``net`` (switched to eval mode) on a labeled dataset."""
    if len(dataset.labels) == 0:
        raise ValueError("empty dataset")
    net.eval()
    scores = net.predict(dataset.features)[:, 0]
    return report_from_scores(scores, dataset.labels, threshold)


REPORT_COLUMNS = (
    "scope", "station_id", "round", "loss", "accuracy", "auc", "g_mean",
    "sensitivity", "specificity", "tp", "tn", "fp", "fn",
)


def fmt(x) -> str:
    """Render a metric cell: undefined becomes an empty cell, floats use repr."""
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def parse_cell(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def report_row(report: MetricsReport, scope: str, station_id=None, round_=None) -> list[str]:
    cm = report.confusion
    return [fmt(v) for v in (
        scope, station_id, round_, report.loss, report.accuracy, report.auc, report.g_mean,
        report.sensitivity, report.specificity, cm.tp, cm.tn, cm.fp, cm.fn,
    )]


def reports_to_csv(rows: list[tuple[str, object, object, MetricsReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for scope, station, rnd, rep in rows:
        w.writerow(report_row(rep, scope, station, rnd))
    return buf.getvalue()


def reports_from_csv(text: str) -> list[tuple[str, str, str, MetricsReport]]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ValueError("unexpected report header")
    out = []
    for r in reader:
        cm = ConfusionMatrix(*(int(r[k]) for k in ("tp", "tn", "fp", "fn")))
        rep = MetricsReport(
            loss=float(r["loss"]),
            accuracy=float(r["accuracy"]),
            auc=parse_cell(r["auc"]),
            g_mean=float(r["g_mean"]),
            sensitivity=parse_cell(r["sensitivity"]),
            specificity=parse_cell(r["specificity"]),
            confusion=cm,
        )
        out.append((r["scope"], r["station_id"], r["round"], rep))
    return out


def mean_report_values(reports: list[MetricsReport]) -> dict[str, Optional[float]]:
    """Average loss/accuracy/auc/g_mean, skipping undefined entries."""
    out: dict[str, Optional[float]] = {}
    for name in ("loss", "accuracy", "auc", "g_mean"):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


__all__ = [
    "ConfusionMatrix", "MetricsReport", "accuracy", "auc", "auc_trapezoid", "confusion",
    "empirical_wasserstein_1d", "evaluate", "g_mean", "report_from_scores", "roc_curve",
    "sensitivity", "specificity",
]
