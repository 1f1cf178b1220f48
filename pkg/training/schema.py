from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from evaluation.schema import MetricReport


class TrainConfig(BaseModel):
    """Training protocol: Adam hyperparameters, early stopping and the CV layout."""

    batch_size: int = Field(16, ge=1, description="Samples per optimizer step")
    max_epochs: int = Field(225, ge=1, description="Upper bound on training epochs")
    learning_rate: float = Field(1e-5, ge=0, description="Adam step size")
    weight_decay: float = Field(0.1, ge=0, description="Decoupled weight decay coefficient")
    adam_epsilon: float = Field(1e-8, gt=0)
    adam_betas: Tuple[float, float] = Field((0.9, 0.999), description="Adam moment decay rates")
    early_stop_patience: int = Field(15, ge=1, description="Epochs without validation WAF1 gain before stopping")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Seed for initialization, shuffling and fold plans")
    repeats: int = Field(1, ge=1, description="Whole-CV repeats with seeds seed, seed+1, ...")
    folds: int = Field(10, ge=3, description="Number of cross-validation folds k")
    val_fraction: float = Field(0.1, gt=0, lt=1, description="Stratified validation share for cross-corpus training")
    n_jobs: Optional[int] = Field(None, ge=1, description="Folds trained in parallel (default: MMFF_THREADS)")

    @model_validator(mode="after")
    def _check(self):
        if self.early_stop_patience >= self.max_epochs:
            raise ValueError(
                f"early_stop_patience ({self.early_stop_patience}) must be below max_epochs ({self.max_epochs})"
            )
        b1, b2 = self.adam_betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError(f"adam_betas must lie in [0, 1), got {self.adam_betas}")
        return self


class TrainCurves(BaseModel):
    train_loss: List[float] = Field(default_factory=list, description="Epoch-mean training cross-entropy")
    val_loss: List[float] = Field(default_factory=list)
    val_waf1: List[float] = Field(default_factory=list)
    best_epoch: int = Field(0, ge=0, description="1-based epoch whose weights were kept")

    @property
    def epochs_trained(self) -> int:
        return len(self.train_loss)


class FoldResult(BaseModel):
    fold: int = Field(..., ge=0)
    repeat: int = Field(0, ge=0)
    seed: int = Field(..., ge=0, description="Seed the fold's model and shuffles were derived from")
    n_train: int
    n_val: int
    n_test: int
    report: MetricReport
    curves: TrainCurves
    seconds: float


class ExperimentResult(BaseModel):
    strategy: str
    k: int = Field(..., ge=1, description="Folds per repeat (1 for cross-corpus runs)")
    folds: List[FoldResult]
    aggregate: MetricReport = Field(..., description="Mean and std over every fold of every repeat")
    repeat_aggregate: Optional[MetricReport] = Field(
        None, description="Mean and std over per-repeat fold means (repeats > 1)"
    )
    seconds: float

    @model_validator(mode="after")
    def _fold_count(self):
        repeats = len({f.repeat for f in self.folds}) or 1
        if len(self.folds) != self.k * repeats:
            raise ValueError(f"{len(self.folds)} fold results for k={self.k} x {repeats} repeats")
        return self
