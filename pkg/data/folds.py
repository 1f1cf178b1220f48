import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from data.schema import FoldPlan, MultimodalSample
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


def plan_folds(samples: Sequence[MultimodalSample], k: int = 10, seed: int = 0) -> FoldPlan:
    """
    Stratified k-fold partition: each class is shuffled and the classes are
    dealt round-robin one after the other, so every fold's per-class count is
    floor or ceil of n_c / k and fold sizes differ by at most one.
    """
    n = len(samples)
    if k < 2:
        raise ArgumentError(f"need at least 2 folds, got k={k}")
    if n < k:
        raise ArgumentError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)

    ordered: List[str] = []
    for label in (0, 1):
        ids = sorted(s.id for s in samples if s.label == label)
        ordered.extend(ids[i] for i in rng.permutation(len(ids)))
    assignments: Dict[str, int] = {sample_id: pos % k for pos, sample_id in enumerate(ordered)}
    if len(assignments) != n:
        raise ArgumentError("sample ids are not unique")
    logger.debug("Planned %d folds over %d samples (seed=%d)", k, n, seed)
    return FoldPlan(k=k, assignments=assignments)


def split_fold(
    samples: Sequence[MultimodalSample], plan: FoldPlan, test_fold: int, val_fold: int
) -> Tuple[List[MultimodalSample], List[MultimodalSample], List[MultimodalSample]]:
    """(train, val, test) for one CV round, each in id order."""
    train, val, test = [], [], []
    for sample in sorted(samples, key=lambda s: s.id):
        fold = plan.assignments[sample.id]
        if fold == test_fold:
            test.append(sample)
        elif fold == val_fold:
            val.append(sample)
        else:
            train.append(sample)
    return train, val, test


def stratified_holdout(
    samples: Sequence[MultimodalSample], fraction: float, seed: int
) -> Tuple[List[MultimodalSample], List[MultimodalSample]]:
    """
    (kept, held_out) with ceil(fraction * n_c) of every non-empty class held
    out. Every non-empty class needs two samples so both sides see it.
    """
    rng = np.random.default_rng(seed)
    kept, held = [], []
    for label in (0, 1):
        group = sorted((s for s in samples if s.label == label), key=lambda s: s.id)
        if not group:
            continue
        if len(group) < 2:
            raise ArgumentError(
                f"class {label} has a single sample ({group[0].id}); a stratified holdout needs at least 2"
            )
        n_held = min(len(group) - 1, int(np.ceil(fraction * len(group))))
        order = rng.permutation(len(group))
        held.extend(group[i] for i in order[:n_held])
        kept.extend(group[i] for i in order[n_held:])
    return sorted(kept, key=lambda s: s.id), sorted(held, key=lambda s: s.id)
