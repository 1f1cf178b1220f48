from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator
from sklearn.metrics import confusion_matrix

# Report column order.
METRIC_NAMES = ("waa", "wap", "war", "waf1", "uaa", "uap", "uar", "uaf1")


class ConfusionMatrix(BaseModel):
    counts: List[List[int]] = Field(..., description="counts[actual][predicted], 2x2, class 0 first")

    @field_validator("counts")
    @classmethod
    def _two_by_two(cls, counts):
        if len(counts) != 2 or any(len(row) != 2 for row in counts):
            raise ValueError("confusion matrix must be 2x2")
        if any(c < 0 for row in counts for c in row):
            raise ValueError("confusion counts must be non-negative")
        return counts

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        cm = confusion_matrix(np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int), labels=[0, 1])
        return cls(counts=cm.astype(int).tolist())

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


class MetricReport(BaseModel):
    waa: float = Field(..., ge=0, le=1, description="Weighted-average accuracy (plain accuracy)")
    wap: float = Field(..., ge=0, le=1)
    war: float = Field(..., ge=0, le=1)
    waf1: float = Field(..., ge=0, le=1)
    uaa: float = Field(..., ge=0, le=1, description="Unweighted-average accuracy (balanced accuracy)")
    uap: float = Field(..., ge=0, le=1)
    uar: float = Field(..., ge=0, le=1)
    uaf1: float = Field(..., ge=0, le=1)
    std: Optional[Dict[str, float]] = Field(None, description="Population std per metric when aggregated")
    flags: List[str] = Field(default_factory=list, description="Zero-division cells defined as 0")
    runs: int = Field(1, ge=1)

    def values(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}
