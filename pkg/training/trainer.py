import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from data.schema import MultimodalSample
from evaluation.metrics import metrics_from_predictions
from evaluation.schema import MetricReport
from models.fusion import predict_label
from models.mmfformer import MMFformer
from models.schema import ModelConfig
from numerics.functional import cross_entropy
from numerics.tensor import backward
from training.checkpoint import Checkpoint
from training.optimizer import AdamState, adam_step
from training.schema import TrainConfig, TrainCurves
from utils.config import config_echo
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    report: MetricReport
    loss: float
    ids: List[str]
    labels: np.ndarray
    predicted: np.ndarray
    probabilities: np.ndarray


@dataclass
class TrainOutcome:
    checkpoint: Checkpoint
    curves: TrainCurves
    model: MMFformer


def infer_dims(model_cfg: ModelConfig, samples: Sequence[MultimodalSample]) -> ModelConfig:
    """Fills audio_dim / video_dim from the data when the config leaves them unset."""
    if not samples:
        raise ArgumentError("cannot infer feature dims from an empty sample list")
    return model_cfg.with_dims(
        model_cfg.audio_dim or samples[0].audio_dim,
        model_cfg.video_dim or samples[0].video_dim,
    )


def evaluate_model(model: MMFformer, samples: Sequence[MultimodalSample]) -> Evaluation:
    """Inference over ``samples``: metrics, mean cross-entropy and per-sample predictions."""
    if not samples:
        raise ArgumentError("cannot evaluate on an empty sample list")
    logits = model.predict_logits(samples)
    labels = np.array([s.label for s in samples], dtype=int)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(len(labels)), labels].mean())
    predicted = np.array([predict_label(row) for row in logits], dtype=int)
    probabilities = np.exp(log_probs[:, 1])
    return Evaluation(
        report=metrics_from_predictions(labels, predicted),
        loss=loss,
        ids=[s.id for s in samples],
        labels=labels,
        predicted=predicted,
        probabilities=probabilities,
    )


def _train_epoch(
    model: MMFformer,
    samples: Sequence[MultimodalSample],
    order: np.ndarray,
    state: AdamState,
    cfg: TrainConfig,
) -> float:
    params = model.parameters()
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        batch = [samples[i] for i in order[start:start + cfg.batch_size]]
        model.zero_grad()
        loss = cross_entropy(model(batch[0].audio, batch[0].video), batch[0].label)
        for sample in batch[1:]:
            loss = loss + cross_entropy(model(sample.audio, sample.video), sample.label)
        loss = loss / len(batch)
        backward(loss)
        adam_step(params, {name: p.grad for name, p in params.items()}, state, cfg)
        total += loss.item() * len(batch)
    return total / len(order)


def train_one(
    model_cfg: ModelConfig,
    train: Sequence[MultimodalSample],
    val: Sequence[MultimodalSample],
    cfg: TrainConfig,
    label: str = "run",
) -> TrainOutcome:
    """
    Mini-batch Adam on softmax cross-entropy with early stopping on
    validation WAF1. The returned checkpoint holds the best epoch's weights
    and optimizer state; ``cfg.seed`` fixes initialization and the shuffles.
    """
    if not train or not val:
        raise ArgumentError(f"train_one needs non-empty splits, got {len(train)} train / {len(val)} val samples")
    model_cfg = infer_dims(model_cfg, train)
    model = MMFformer(model_cfg, seed=cfg.seed)
    params = model.parameters()
    state = AdamState.zeros(params)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])

    curves = TrainCurves()
    best_waf1 = -1.0
    best_state, best_moments, best_step = model.state_dict(), ({}, {}), 0
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train))
        train_loss = _train_epoch(model, train, order, state, cfg)
        result = evaluate_model(model, val)
        curves.train_loss.append(train_loss)
        curves.val_loss.append(result.loss)
        curves.val_waf1.append(result.report.waf1)
        logger.info(
            "[%s] epoch=%d train_loss=%.6f val_loss=%.6f val_waf1=%.4f",
            label, epoch, train_loss, result.loss, result.report.waf1,
        )

        if result.report.waf1 > best_waf1:
            best_waf1 = result.report.waf1
            curves.best_epoch = epoch
            best_state = model.state_dict()
            best_moments = ({k: v.copy() for k, v in state.m.items()}, {k: v.copy() for k, v in state.v.items()})
            best_step = state.step
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                logger.info(
                    "[%s] early stop at epoch %d; best epoch %d (val_waf1=%.4f)",
                    label, epoch, curves.best_epoch, best_waf1,
                )
                break

    model.load_state_dict(best_state)
    logger.info("[%s] kept epoch %d of %d", label, curves.best_epoch, curves.epochs_trained)
    checkpoint = Checkpoint(
        config=config_echo(model_cfg, cfg),
        parameters=best_state,
        epoch=curves.best_epoch,
        best_metric=best_waf1,
        optimizer_step=best_step,
        moments_m=best_moments[0],
        moments_v=best_moments[1],
    )
    return TrainOutcome(checkpoint=checkpoint, curves=curves, model=model)

