"""CSV result tables: leading columns, then the eight metric columns."""

from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from evaluation.schema import METRIC_NAMES, MetricReport

COLUMNS = [name.upper() for name in METRIC_NAMES]

PathLike = Union[str, Path]


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f}±{std:.4f}"


def metric_row(report: MetricReport) -> Dict[str, str]:
    """Metric columns for one report; aggregated reports render as mean±std."""
    row = {}
    for name, column in zip(METRIC_NAMES, COLUMNS):
        value = getattr(report, name)
        if report.std is not None:
            row[column] = format_mean_std(value, report.std[name])
        else:
            row[column] = f"{value:.4f}"
    return row


def metric_table(rows: Iterable[Tuple[Dict[str, object], MetricReport]]) -> pd.DataFrame:
    """One table row per (leading columns, report) pair."""
    records: List[Dict[str, object]] = []
    for leading, report in rows:
        record = dict(leading)
        record.update(metric_row(report))
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_table(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


def write_report(report: MetricReport, path: PathLike, **leading) -> Path:
    return write_table(metric_table([(leading, report)]), path)


def write_predictions(
    ids: Sequence[str], labels: Sequence[int], predicted: np.ndarray, probabilities: np.ndarray, path: PathLike
) -> Path:
    frame = pd.DataFrame(
        {
            "id": list(ids),
            "label": [int(v) for v in labels],
            "predicted": [int(v) for v in predicted],
            "prob_depressed": [f"{p:.6f}" for p in probabilities],
        }
    )
    return write_table(frame, path)


def read_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, dtype=str, keep_default_na=False)
