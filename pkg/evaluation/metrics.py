"""
Weighted-average (WA) and unweighted-average (UA) classification metrics.

WA weights each class by its support, UA takes the plain mean over the two
classes. WAA is plain accuracy and UAA balanced accuracy.
"""

import logging
from typing import List, Sequence

import numpy as np

from evaluation.schema import METRIC_NAMES, ConfusionMatrix, MetricReport
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


def _ratio(num: float, den: float, flag: str, flags: List[str]) -> float:
    if den > 0:
        return num / den
    flags.append(flag)
    return 0.0


def per_class_scores(cm: ConfusionMatrix):
    """(precision, recall, f1, support, flags) arrays indexed by class."""
    counts = cm.as_array()
    flags: List[str] = []
    precision, recall, f1 = np.zeros(2), np.zeros(2), np.zeros(2)
    for c in range(2):
        tp = float(counts[c, c])
        precision[c] = _ratio(tp, counts[:, c].sum(), f"precision[{c}]", flags)
        recall[c] = _ratio(tp, counts[c, :].sum(), f"recall[{c}]", flags)
        f1[c] = _ratio(2 * precision[c] * recall[c], precision[c] + recall[c], f"f1[{c}]", flags)
    return precision, recall, f1, counts.sum(axis=1).astype(float), flags


def compute_metrics(cm: ConfusionMatrix) -> MetricReport:
    total = cm.total
    if total < 1:
        raise ArgumentError("cannot compute metrics from an empty confusion matrix")
    precision, recall, f1, support, flags = per_class_scores(cm)
    weights = support / total
    accuracy = float(np.trace(cm.as_array())) / total

    if flags:
        logger.warning("Zero-division metric cells defined as 0: %s (counts=%s)", ", ".join(flags), cm.counts)

    values = {
        "waa": accuracy,
        "wap": float(weights @ precision),
        "war": float(weights @ recall),
        "waf1": float(weights @ f1),
        "uaa": float(recall.mean()),
        "uap": float(precision.mean()),
        "uar": float(recall.mean()),
        "uaf1": float(f1.mean()),
    }
    return MetricReport(**{k: min(1.0, max(0.0, v)) for k, v in values.items()}, flags=flags)


def aggregate_runs(reports: Sequence[MetricReport]) -> MetricReport:
    """Per-metric mean and population standard deviation."""
    if not reports:
        raise ArgumentError("aggregate_runs needs at least one report")
    table = np.array([[r.values()[name] for name in METRIC_NAMES] for r in reports])
    means = table.mean(axis=0)
    stds = table.std(axis=0)

    flags: List[str] = []
    for i, report in enumerate(reports):
        flags.extend(f"run{i}:{flag}" for flag in report.flags)

    return MetricReport(
        **{name: float(min(1.0, max(0.0, m))) for name, m in zip(METRIC_NAMES, means)},
        std={name: float(s) for name, s in zip(METRIC_NAMES, stds)},
        flags=flags,
        runs=len(reports),
    )


def metrics_from_predictions(y_true, y_pred) -> MetricReport:
    return compute_metrics(ConfusionMatrix.from_predictions(y_true, y_pred))
