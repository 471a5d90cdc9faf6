"""Confusion-matrix classification metrics.

Micro-averaged values are computed from pooled integer counts, not from
per-class floats. For single-label classification the pooled false
positives and false negatives both equal (total - trace), which makes
micro precision, recall, F1, and accuracy the same rational number; doing
the division once per metric on exact integers keeps them equal in
floating point too, not just approximately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence


class EmptyMatrixError(ValueError):
    """Metrics requested for a confusion matrix with zero total count."""


@dataclass
class ConfusionMatrix:
    counts: List[List[int]]

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(self.k))


@dataclass
class MetricsReport:
    accuracy: float
    per_class_precision: List[float]
    per_class_recall: List[float]
    per_class_f1: List[float]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: List[List[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "per_class_f1": self.per_class_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion,
        }


def confusion(true_labels: Sequence[int], predicted_labels: Sequence[int], k: int) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a k-by-k matrix, rows = true."""
    if len(true_labels) != len(predicted_labels):
        raise ValueError(f"label sequences differ in length: {len(true_labels)} vs {len(predicted_labels)}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts = [[0] * k for _ in range(k)]
    for t, p in zip(true_labels, predicted_labels):
        t, p = int(t), int(p)
        if not (0 <= t < k and 0 <= p < k):
            raise ValueError(f"label pair ({t}, {p}) out of range for k={k}")
        counts[t][p] += 1
    return ConfusionMatrix(counts)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    s = precision + recall
    return 2.0 * precision * recall / s if s else 0.0


def _per_class(cm: ConfusionMatrix) -> tuple:
    k = cm.k
    precision, recall, f1 = [], [], []
    for c in range(k):
        tp = cm.counts[c][c]
        col = sum(cm.counts[r][c] for r in range(k))
        row = sum(cm.counts[c])
        p = _ratio(tp, col)
        r = _ratio(tp, row)
        precision.append(p)
        recall.append(r)
        f1.append(f1_score(p, r))
    return precision, recall, f1


def micro_macro_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Micro and macro averaged report; accuracy = trace / total."""
    if cm.k < 2:
        raise ValueError(f"need at least 2 classes, got {cm.k}")
    total = cm.total
    if total == 0:
        raise EmptyMatrixError("confusion matrix is empty")
    trace = cm.trace
    precision, recall, f1 = _per_class(cm)
    # Pooled counts: every off-diagonal entry is one FP (for its column's
    # class) and one FN (for its row's class), so both pools equal
    # total - trace and every micro metric reduces to trace / total.
    fp = total - trace
    fn = total - trace
    return MetricsReport(
        accuracy=_ratio(trace, total),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        micro_precision=_ratio(trace, trace + fp),
        micro_recall=_ratio(trace, trace + fn),
        micro_f1=_ratio(2 * trace, 2 * trace + fp + fn),
        macro_precision=sum(precision) / cm.k,
        macro_recall=sum(recall) / cm.k,
        macro_f1=sum(f1) / cm.k,
        confusion=[row[:] for row in cm.counts],
    )


def binary_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Two-class report; the positive class is index 1."""
    if cm.k != 2:
        raise ValueError(f"binary metrics need k == 2, got k={cm.k}")
    if cm.total == 0:
        raise EmptyMatrixError("confusion matrix is empty")
    return micro_macro_metrics(cm)


def format_report(report: MetricsReport, class_names: Optional[Sequence[str]] = None) -> str:
    """Aligned plain-text table, 4 decimal places.

    Binary reports lead with the positive-class row (precision, recall,
    accuracy, F1); multiclass reports lead with the micro-averaged row.
    Per-class rows follow either way.
    """
    k = len(report.per_class_f1)
    if class_names is None:
        class_names = [f"class_{c}" for c in range(k)]
    lines = []
    header = f"{'':<12} {'precision':>10} {'recall':>10} {'accuracy':>10} {'f1':>10}"
    lines.append(header)
    if k == 2:
        lines.append(
            f"{'positive':<12} {report.per_class_precision[1]:>10.4f} {report.per_class_recall[1]:>10.4f}"
            f" {report.accuracy:>10.4f} {report.per_class_f1[1]:>10.4f}"
        )
    else:
        lines.append(
            f"{'micro':<12} {report.micro_precision:>10.4f} {report.micro_recall:>10.4f}"
            f" {report.accuracy:>10.4f} {report.micro_f1:>10.4f}"
        )
    lines.append(
        f"{'macro':<12} {report.macro_precision:>10.4f} {report.macro_recall:>10.4f}"
        f" {'':>10} {report.macro_f1:>10.4f}"
    )
    lines.append("")
    lines.append(f"{'class':<12} {'precision':>10} {'recall':>10} {'f1':>10}")
    for c in range(k):
        lines.append(
            f"{str(class_names[c]):<12} {report.per_class_precision[c]:>10.4f}"
            f" {report.per_class_recall[c]:>10.4f} {report.per_class_f1[c]:>10.4f}"
        )
    return "\n".join(lines) + "\n"
