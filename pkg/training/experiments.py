"""
Experiment drivers: k-fold cross-validation, the fusion ablation and
cross-corpus transfer.

Inside every CV round the held-out fold is the test set, the next fold
(cyclically) is the validation set for early stopping and the rest is
training data. Folds are independent and may run in parallel; results are
always reduced in (repeat, fold) order.
"""

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from data.folds import plan_folds, split_fold, stratified_holdout
from data.schema import FoldPlan, MultimodalSample
from evaluation.metrics import aggregate_runs
from models.schema import ABLATION_STRATEGIES, FusionStrategy, ModelConfig
from numerics.functional import pooling_matrix
from training.checkpoint import save_checkpoint
from training.schema import ExperimentResult, FoldResult, TrainConfig
from training.trainer import evaluate_model, infer_dims, train_one
from utils.config import fold_threads
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def derive_seed(*parts: int) -> int:
    """Stable 64-bit child seed for a (seed, repeat, fold, ...) tuple."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


def checkpoint_name(fold: int, repeat: int, repeats: int) -> str:
    return f"fold{fold:02d}.mmff" if repeats == 1 else f"repeat{repeat:02d}_fold{fold:02d}.mmff"


def _run_fold(
    samples: Sequence[MultimodalSample],
    plan: FoldPlan,
    fold: int,
    repeat: int,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    checkpoint_dir: Optional[Path],
) -> FoldResult:
    start = time.perf_counter()
    train, val, test = split_fold(samples, plan, test_fold=fold, val_fold=(fold + 1) % plan.k)
    fold_cfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, repeat, fold)})
    label = f"{model_cfg.fusion.value} r{repeat} f{fold}"
    outcome = train_one(model_cfg, train, val, fold_cfg, label=label)
    evaluation = evaluate_model(outcome.model, test)
    if checkpoint_dir is not None:
        save_checkpoint(outcome.checkpoint, checkpoint_dir / checkpoint_name(fold, repeat, cfg.repeats))
    logger.info("[%s] test WAA=%.4f WAF1=%.4f", label, evaluation.report.waa, evaluation.report.waf1)
    return FoldResult(
        fold=fold,
        repeat=repeat,
        seed=fold_cfg.seed,
        n_train=len(train),
        n_val=len(val),
        n_test=len(test),
        report=evaluation.report,
        curves=outcome.curves,
        seconds=time.perf_counter() - start,
    )


def _resolve_jobs(cfg: TrainConfig, n_tasks: int, n_jobs: Optional[int]) -> int:
    return max(1, min(n_jobs or cfg.n_jobs or fold_threads(), n_tasks))


def run_cv(
    samples: Sequence[MultimodalSample],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    checkpoint_dir: Optional[PathLike] = None,
    n_jobs: Optional[int] = None,
) -> ExperimentResult:
    """k-fold CV, repeated ``cfg.repeats`` times with fold plans seeded seed, seed+1, ..."""
    if not samples:
        raise ArgumentError("run_cv needs a non-empty dataset")
    start = time.perf_counter()
    model_cfg = infer_dims(model_cfg, samples)
    samples = sorted(samples, key=lambda s: s.id)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    tasks: List[Tuple[FoldPlan, int, int]] = []
    for repeat in range(cfg.repeats):
        plan = plan_folds(samples, k=cfg.folds, seed=cfg.seed + repeat)
        tasks.extend((plan, fold, repeat) for fold in range(plan.k))

    jobs = _resolve_jobs(cfg, len(tasks), n_jobs)
    logger.info(
        "Cross-validating %s: %d samples, k=%d, repeats=%d, %d parallel job(s)",
        model_cfg.fusion.value, len(samples), cfg.folds, cfg.repeats, jobs,
    )
    folds = Parallel(n_jobs=jobs)(
        delayed(_run_fold)(samples, plan, fold, repeat, model_cfg, cfg, ckpt_dir) for plan, fold, repeat in tasks
    )
    folds = sorted(folds, key=lambda f: (f.repeat, f.fold))

    repeat_aggregate = None
    if cfg.repeats > 1:
        per_repeat = [aggregate_runs([f.report for f in folds if f.repeat == r]) for r in range(cfg.repeats)]
        repeat_aggregate = aggregate_runs(per_repeat)

    return ExperimentResult(
        strategy=model_cfg.fusion.value,
        k=cfg.folds,
        folds=folds,
        aggregate=aggregate_runs([f.report for f in folds]),
        repeat_aggregate=repeat_aggregate,
        seconds=time.perf_counter() - start,
    )


def run_ablation(
    samples: Sequence[MultimodalSample],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    strategies: Sequence[FusionStrategy] = ABLATION_STRATEGIES,
    checkpoint_dir: Optional[PathLike] = None,
    n_jobs: Optional[int] = None,
) -> Dict[str, ExperimentResult]:
    """run_cv once per strategy, keyed by strategy tag in the given order."""
    results: Dict[str, ExperimentResult] = {}
    for strategy in strategies:
        strategy = FusionStrategy(strategy)
        ckpt = Path(checkpoint_dir) / strategy.value if checkpoint_dir is not None else None
        results[strategy.value] = run_cv(
            samples, model_cfg.model_copy(update={"fusion": strategy}), cfg, checkpoint_dir=ckpt, n_jobs=n_jobs
        )
        logger.info("Ablation %s: WAF1=%.4f", strategy.value, results[strategy.value].aggregate.waf1)
    return results


def adapt_feature_dims(
    samples: Sequence[MultimodalSample], audio_dim: int, video_dim: int
) -> List[MultimodalSample]:
    """Resamples each feature axis to the trained dims with adaptive average pooling."""
    adapted = []
    for s in samples:
        audio, video = s.audio, s.video
        if s.audio_dim != audio_dim:
            audio = (audio.T @ pooling_matrix(s.audio_dim, audio_dim)).T
        if s.video_dim != video_dim:
            video = video @ pooling_matrix(s.video_dim, video_dim)
        adapted.append(MultimodalSample(id=s.id, audio=audio, video=video, label=s.label))
    return adapted


def run_cross_corpus(
    train_samples: Sequence[MultimodalSample],
    test_samples: Sequence[MultimodalSample],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    checkpoint_path: Optional[PathLike] = None,
) -> ExperimentResult:
    """Trains on the whole first corpus (stratified validation hold-out) and tests on the whole second."""
    if not train_samples or not test_samples:
        raise ArgumentError("cross-corpus runs need two non-empty datasets")
    overlap = {s.id for s in train_samples} & {s.id for s in test_samples}
    if overlap:
        raise ArgumentError(
            f"train and test corpora share {len(overlap)} sample id(s), e.g. {sorted(overlap)[0]!r}"
        )
    start = time.perf_counter()
    model_cfg = infer_dims(model_cfg, train_samples)
    train, val = stratified_holdout(train_samples, cfg.val_fraction, seed=cfg.seed)
    test = adapt_feature_dims(sorted(test_samples, key=lambda s: s.id), model_cfg.audio_dim, model_cfg.video_dim)

    outcome = train_one(model_cfg, train, val, cfg, label=f"{model_cfg.fusion.value} cross-corpus")
    evaluation = evaluate_model(outcome.model, test)
    if checkpoint_path is not None:
        save_checkpoint(outcome.checkpoint, checkpoint_path)

    fold = FoldResult(
        fold=0,
        repeat=0,
        seed=cfg.seed,
        n_train=len(train),
        n_val=len(val),
        n_test=len(test),
        report=evaluation.report,
        curves=outcome.curves,
        seconds=time.perf_counter() - start,
    )
    return ExperimentResult(
        strategy=model_cfg.fusion.value,
        k=1,
        folds=[fold],
        aggregate=aggregate_runs([evaluation.report]),
        seconds=fold.seconds,
    )
