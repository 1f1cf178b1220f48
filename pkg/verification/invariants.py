"""
Property suite run by ``main.py verify``.

Each property is a function that raises ``AssertionError`` (or any project
error) on failure and returns a short detail string on success. Properties
marked ``slow`` train real models on synthetic corpora and only run with
``--acceptance``.
"""

import logging
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from data.folds import plan_folds
from data.loader import load_dataset, save_dataset
from data.schema import MultimodalSample, SynthSpec
from data.synthetic import generate_synthetic
from evaluation.metrics import compute_metrics
from evaluation.reports import metric_table
from evaluation.schema import ConfusionMatrix
from models.audio_branch import audio_forward
from models.fusion import attention_map, attention_pool, cross_attention, tensor_fusion
from models.layers import AttentionParams
from models.mmfformer import MMFformer
from models.schema import ABLATION_STRATEGIES, BASELINE_STRATEGIES, AudioFrontendConfig, FusionStrategy, ModelConfig
from models.video_branch import video_forward
from numerics import functional as F
from numerics.tensor import Tensor, backward, no_grad
from training.checkpoint import load_checkpoint, save_checkpoint
from training.experiments import run_cross_corpus, run_cv
from training.optimizer import AdamState, adam_step
from training.schema import TrainConfig
from training.trainer import train_one

logger = logging.getLogger(__name__)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class _Property:
    name: str
    fn: Callable[[], str]
    slow: bool


_REGISTRY: List[_Property] = []


def invariant(name: str, slow: bool = False):
    def register(fn: Callable[[], str]) -> Callable[[], str]:
        _REGISTRY.append(_Property(name, fn, slow))
        return fn

    return register


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


# -- shared fixtures ----------------------------------------------------------


def toy_model_config(fusion="IT", audio_dim: int = 3, video_dim: int = 3, **overrides) -> ModelConfig:
    """Toy architecture used by the gradient and contract checks."""
    values = dict(
        fusion=fusion,
        audio_dim=audio_dim,
        video_dim=video_dim,
        embed_dim=4,
        num_heads=2,
        mlp_hidden=6,
        init_std=0.5,
        video_length=4,
        video_blocks=1,
        audio_freq=4,
        audio_time=4,
        patch_freq=2,
        patch_time=2,
        stride_freq=2,
        stride_time=2,
        audio_layers=1,
        base_grid_freq=3,
        base_grid_time=5,
        audio_kernel=3,
        fusion_layers=1,
    )
    values.update(overrides)
    return ModelConfig(**values)


def desk_model_config(fusion="IT", **overrides) -> ModelConfig:
    """Small but trainable architecture for the synthetic acceptance runs."""
    values = dict(
        fusion=fusion,
        embed_dim=8,
        num_heads=2,
        mlp_hidden=16,
        video_length=8,
        video_blocks=1,
        audio_freq=8,
        audio_time=8,
        patch_freq=4,
        patch_time=4,
        stride_freq=4,
        stride_time=4,
        audio_layers=1,
        base_grid_freq=4,
        base_grid_time=8,
        fusion_layers=2,
    )
    values.update(overrides)
    return ModelConfig(**values)


def desk_train_config(**overrides) -> TrainConfig:
    values = dict(
        batch_size=16, max_epochs=50, learning_rate=3e-3, weight_decay=1e-4,
        early_stop_patience=15, folds=10, n_jobs=None,
    )
    values.update(overrides)
    return TrainConfig(**values)


def random_sample(rng: np.random.Generator, audio_dim: int, video_dim: int, sample_id: str = "x") -> MultimodalSample:
    return MultimodalSample(
        id=sample_id,
        audio=rng.normal(size=(audio_dim, int(rng.integers(3, 9)))),
        video=rng.normal(size=(int(rng.integers(3, 9)), video_dim)),
        label=int(rng.integers(0, 2)),
    )


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: Optional[np.random.Generator] = None,
    entries_per_tensor: Optional[int] = None,
    eps: float = 1e-5,
    floor: float = 1e-4,
) -> float:
    """
    Largest relative error between reverse-mode gradients and central
    differences, |a - n| / max(|a|, |n|, floor), over all (or a random
    subset of) entries of ``tensors``.
    """
    for t in tensors:
        t.zero_grad()
    backward(loss_fn())
    analytic = [t.grad.copy() for t in tensors]

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        positions = np.arange(flat.size)
        if entries_per_tensor is not None and flat.size > entries_per_tensor:
            positions = rng.choice(flat.size, size=entries_per_tensor, replace=False)
        for i in positions:
            original = flat[i]
            with no_grad():
                flat[i] = original + eps
                plus = loss_fn().item()
                flat[i] = original - eps
                minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            a = grad.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst


def _leaf(rng: np.random.Generator, *shape: int, low: Optional[float] = None) -> Tensor:
    values = rng.uniform(low, 1.5, size=shape) if low is not None else rng.normal(size=shape)
    return Tensor(values, requires_grad=True)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


# -- numerics -----------------------------------------------------------------


def _op_cases(rng: np.random.Generator) -> Dict[str, tuple]:
    """name -> (loss builder, tensors to check)."""
    cases = {}

    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    w = rng.normal(size=(3, 2))
    cases["matmul"] = (lambda: _weighted_sum(F.matmul(a, b), w), [a, b])

    ba, bb = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 4, 2)
    bw = rng.normal(size=(2, 3, 2))
    cases["batched matmul"] = (lambda: _weighted_sum(F.matmul(ba, bb), bw), [ba, bb])

    s = _leaf(rng, 3, 5)
    sw = rng.normal(size=(3, 5))
    cases["softmax_rows"] = (lambda: _weighted_sum(F.softmax_rows(s), sw), [s])

    x, g, bias = _leaf(rng, 3, 5), _leaf(rng, 5), _leaf(rng, 5)
    lw = rng.normal(size=(3, 5))
    cases["layer_norm"] = (lambda: _weighted_sum(F.layer_norm(x, g, bias), lw), [x, g, bias])

    ge = _leaf(rng, 4, 3)
    gw = rng.normal(size=(4, 3))
    cases["gelu"] = (lambda: _weighted_sum(F.gelu(ge), gw), [ge])

    cx, ck = _leaf(rng, 3, 7), _leaf(rng, 2, 3, 3)
    cw = rng.normal(size=(2, F.conv_output_length(7, 3, 2, 1)))
    cases["conv1d"] = (lambda: _weighted_sum(F.conv1d(cx, ck, stride=2, padding=1), cw), [cx, ck])

    px, pk = _leaf(rng, 1, 6, 7), _leaf(rng, 3, 1, 2, 3)
    pw = rng.normal(size=(3, 3, 3))
    cases["conv2d_patches"] = (lambda: _weighted_sum(F.conv2d_patches(px, pk, (2, 2)), pw), [px, pk])

    ax = _leaf(rng, 3, 7)
    aw = rng.normal(size=(3, 4))
    cases["adaptive_avg_pool"] = (lambda: _weighted_sum(F.adaptive_avg_pool(ax, 4), aw), [ax])

    rx = _leaf(rng, 2, 3, 4)
    rw = rng.normal(size=(2, 5, 6))
    cases["bilinear_resize2d"] = (lambda: _weighted_sum(F.bilinear_resize2d(rx, (5, 6)), rw), [rx])

    logits = _leaf(rng, 2)
    label = int(rng.integers(0, 2))
    cases["cross_entropy"] = (lambda: F.cross_entropy(logits, label), [logits])

    nw = _leaf(rng, 5, low=0.5)
    nww = rng.normal(size=5)
    cases["normalize_weights"] = (lambda: _weighted_sum(F.normalize_weights(nw), nww), [nw])

    u, v = _leaf(rng, 3), _leaf(rng, 2)
    tw = rng.normal(size=12)
    cases["tensor_fusion"] = (lambda: _weighted_sum(tensor_fusion(u, v), tw), [u, v])

    m, feats = _leaf(rng, 3, 4, low=0.1), _leaf(rng, 4, 2)
    mq, fq = _leaf(rng, 4, 3, low=0.1), _leaf(rng, 4, 2)
    ow = rng.normal(size=2)
    cases["attention_pool keys"] = (lambda: _weighted_sum(attention_pool(m, feats, "keys"), ow), [m, feats])
    cases["attention_pool queries"] = (lambda: _weighted_sum(attention_pool(mq, fq, "queries"), ow), [mq, fq])

    t = _leaf(rng, 2, 3, 4)
    kw = rng.normal(size=(4, 3))
    cases["shape ops"] = (
        lambda: _weighted_sum(
            F.concat([t[0].T, t[1].transpose(1, 0).reshape(4, 3)], axis=0)[1:5] * 2.0 - 1.0, kw
        ) + t.mean() + (t - t.sum(axis=1, keepdims=True)).sum(),
        [t],
    )
    return cases


@invariant("gradients: primitive ops vs central differences (20 seeds)")
def check_op_gradients() -> str:
    worst = 0.0
    for seed in range(20):
        for name, (loss_fn, tensors) in _op_cases(np.random.default_rng(seed)).items():
            err = finite_difference_check(loss_fn, tensors)
            _require(err < 1e-4, f"{name} (seed {seed}): relative error {err:.2e}")
            worst = max(worst, err)
    return f"max relative error {worst:.2e}"


def _model_gradient_error(strategy: FusionStrategy, seed: int) -> float:
    rng = np.random.default_rng(seed)
    model = MMFformer(toy_model_config(strategy), seed=seed)
    sample = random_sample(rng, 3, 3)
    params = [t for _, t in model.named_parameters()]
    return finite_difference_check(
        lambda: F.cross_entropy(model(sample.audio, sample.video), sample.label),
        params, rng=rng, entries_per_tensor=2,
    )


def _check_model_gradients(seeds: int) -> str:
    worst = 0.0
    for strategy in ABLATION_STRATEGIES:
        for seed in range(seeds):
            err = _model_gradient_error(strategy, seed)
            _require(err < 1e-4, f"{strategy.value} (seed {seed}): relative error {err:.2e}")
            worst = max(worst, err)
    return f"{len(ABLATION_STRATEGIES)} strategies x {seeds} seeds, max relative error {worst:.2e}"


@invariant("gradients: both branches, every fusion path and the classifier")
def check_model_gradients() -> str:
    return _check_model_gradients(seeds=3)


@invariant("gradients: full model, 20 seeds per strategy", slow=True)
def check_model_gradients_exhaustive() -> str:
    return _check_model_gradients(seeds=20)


@invariant("softmax rows sum to one")
def check_softmax_rows() -> str:
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = F.softmax_rows(Tensor(rng.normal(scale=20.0, size=(4, 6)))).data
        _require(np.allclose(y.sum(axis=-1), 1.0, atol=1e-12), "softmax row does not sum to 1")
    y = F.softmax_rows(Tensor([[0.0, 0.0, 0.0, 0.0]])).data
    _require(np.allclose(y, 0.25, atol=1e-15), "uniform softmax is not 1/n")
    return "50 random matrices"


# -- shape and formula contracts ------------------------------------------------


@invariant("video branch output is (L+1) x D for T in {3, L, 5L}")
def check_video_shapes() -> str:
    cfg = toy_model_config("video", video_length=6)
    model = MMFformer(cfg, seed=0)
    rng = np.random.default_rng(0)
    expected = (cfg.video_length + 1, cfg.embed_dim)
    for length in (3, cfg.video_length, 5 * cfg.video_length):
        with no_grad():
            out = video_forward(Tensor(rng.normal(size=(length, 3))), model.video, model.video_cfg)
        _require(out.shape == expected, f"T={length}: got {out.shape}, expected {expected}")
    return f"output {expected}"


def _enumerate_placements(size: int, patch: int, stride: int) -> int:
    return sum(1 for start in range(0, size, stride) if start + patch <= size)


@invariant("audio patch count matches exhaustive placement enumeration")
def check_audio_patch_counts() -> str:
    size, checked = 12, 0
    for p_f in range(1, 13):
        for p_t in range(1, 13):
            for s_f in range(1, 13):
                for s_t in range(1, 13):
                    cfg = AudioFrontendConfig(
                        input_freq=2, target_freq=size, target_time=size, patch=(p_f, p_t), stride=(s_f, s_t),
                        embed_dim=2, num_layers=1, num_heads=1, mlp_hidden=2,
                    )
                    expected = _enumerate_placements(size, p_f, s_f) * _enumerate_placements(size, p_t, s_t)
                    _require(cfg.num_patches == expected, f"patch {p_f}x{p_t} stride {s_f}x{s_t}")
                    checked += 1
    rng = np.random.default_rng(0)
    for p, s in ((1, 1), (2, 1), (3, 2), (4, 4), (5, 3)):
        cfg = toy_model_config("audio", audio_freq=6, audio_time=7, patch_freq=p, patch_time=p, stride_freq=s,
                               stride_time=s)
        model = MMFformer(cfg, seed=0)
        with no_grad():
            out = audio_forward(Tensor(rng.normal(size=(3, 9))), model.audio, model.audio_cfg)
        m = _enumerate_placements(6, p, s) * _enumerate_placements(7, p, s)
        _require(out.shape == (m + 2, cfg.embed_dim), f"audio output {out.shape}, expected {(m + 2, cfg.embed_dim)}")
    return f"{checked} patch/stride combinations"


@invariant("positional embedding interpolation identity and midpoint")
def check_positional_identity() -> str:
    rng = np.random.default_rng(0)
    for h, w in ((3, 5), (1, 4), (12, 101)):
        base = rng.normal(size=(2, h, w))
        out = F.bilinear_resize2d(Tensor(base), (h, w)).data
        _require(np.max(np.abs(out - base)) <= 1e-12, f"resize to base grid {h}x{w} changed values")
    mid = F.bilinear_resize2d(Tensor([[[0.0, 2.0]]]), (1, 3)).data
    _require(np.array_equal(mid, np.array([[[0.0, 1.0, 2.0]]])), f"midpoint case gave {mid}")
    return "identity within 1e-12; [[0,2]] -> [[0,1,2]]"


@invariant("tensor fusion has (D+1)^2 entries with a leading 1")
def check_tensor_fusion_structure() -> str:
    rng = np.random.default_rng(0)
    for dim in (2, 4, 8):
        out = tensor_fusion(Tensor(rng.normal(size=dim)), Tensor(rng.normal(size=dim))).data
        _require(out.shape == ((dim + 1) ** 2,), f"D={dim}: shape {out.shape}")
        _require(out[0] == 1.0, f"D={dim}: element (0,0) is {out[0]}")
    return "D in {2, 4, 8}"


# -- attention ------------------------------------------------------------------


@invariant("every attention row sums to one (100 random forwards)")
def check_attention_normalization() -> str:
    rng = np.random.default_rng(0)
    models = {s: MMFformer(toy_model_config(s), seed=i) for i, s in enumerate(ABLATION_STRATEGIES)}
    rows = 0
    for i in range(100):
        strategy = ABLATION_STRATEGIES[i % len(ABLATION_STRATEGIES)]
        sample = random_sample(rng, 3, 3)
        trace: List[np.ndarray] = []
        with no_grad():
            models[strategy].forward(sample.audio, sample.video, trace=trace)
        _require(bool(trace), f"{strategy.value} recorded no attention")
        for weights in trace:
            _require(np.all(np.abs(weights.sum(axis=-1) - 1.0) <= 1e-9), f"{strategy.value}: row sum off")
            rows += weights.shape[-2] * (weights.shape[0] if weights.ndim == 3 else 1)
    return f"{rows} rows checked"


def _naive_cross_attention(q_src, kv_src, wq, wk, wv):
    n_q, dim = q_src.shape
    out = np.zeros((n_q, dim))
    for i in range(n_q):
        q = [sum(q_src[i, c] * wq[c, d] for c in range(dim)) for d in range(dim)]
        scores = []
        for j in range(kv_src.shape[0]):
            k = [sum(kv_src[j, c] * wk[c, d] for c in range(dim)) for d in range(dim)]
            scores.append(sum(q[d] * k[d] for d in range(dim)) / math.sqrt(dim))
        top = max(scores)
        exps = [math.exp(s - top) for s in scores]
        probs = [e / sum(exps) for e in exps]
        for j, p in enumerate(probs):
            for d in range(dim):
                out[i, d] += p * sum(kv_src[j, c] * wv[c, d] for c in range(dim))
    return out, probs


def _naive_attention_map(q_src, k_src, wq, wk):
    rows = []
    for i in range(q_src.shape[0]):
        zero_v = np.zeros_like(wq)
        _, probs = _naive_cross_attention(q_src[i:i + 1], k_src, wq, wk, zero_v)
        rows.append(probs)
    return np.array(rows)


@invariant("cross-attention and attention maps match naive loops")
def check_attention_oracles() -> str:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        dim = int(rng.integers(1, 5))
        q_src = rng.normal(size=(int(rng.integers(1, 5)), dim))
        kv_src = rng.normal(size=(int(rng.integers(1, 5)), dim))
        wq, wk, wv = (rng.normal(size=(dim, dim)) for _ in range(3))
        params = AttentionParams(Tensor(wq), Tensor(wk), Tensor(wv))
        fast = cross_attention(Tensor(q_src), Tensor(kv_src), params).data
        slow, _ = _naive_cross_attention(q_src, kv_src, wq, wk, wv)
        fast_map = attention_map(Tensor(q_src), Tensor(kv_src), params).data
        slow_map = _naive_attention_map(q_src, kv_src, wq, wk)
        err = max(np.max(np.abs(fast - slow)), np.max(np.abs(fast_map - slow_map)))
        _require(err <= 1e-10, f"attention differs from the loop oracle by {err:.2e}")
        worst = max(worst, err)
    return f"50 instances, max deviation {worst:.2e}"


# -- metrics, optimizer, protocol -----------------------------------------------


def naive_metrics(counts: np.ndarray) -> Dict[str, float]:
    """Per-class loop oracle for the eight WA / UA metrics."""
    total = counts.sum()
    p, r, f, w = [], [], [], []
    for c in range(2):
        tp = counts[c][c]
        predicted = counts[0][c] + counts[1][c]
        actual = counts[c][0] + counts[c][1]
        pc = tp / predicted if predicted else 0.0
        rc = tp / actual if actual else 0.0
        p.append(pc)
        r.append(rc)
        f.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
        w.append(actual / total)
    return {
        "waa": (counts[0][0] + counts[1][1]) / total,
        "wap": w[0] * p[0] + w[1] * p[1],
        "war": w[0] * r[0] + w[1] * r[1],
        "waf1": w[0] * f[0] + w[1] * f[1],
        "uaa": (r[0] + r[1]) / 2,
        "uap": (p[0] + p[1]) / 2,
        "uar": (r[0] + r[1]) / 2,
        "uaf1": (f[0] + f[1]) / 2,
    }


@invariant("metrics agree with a per-class loop oracle (1000 matrices)")
def check_metrics_oracle() -> str:
    report = compute_metrics(ConfusionMatrix(counts=[[50, 10], [5, 35]]))
    _require(abs(report.waa - 0.85) <= 1e-12, f"worked example WAA {report.waa}")
    _require(abs(report.uaa - (50 / 60 + 35 / 40) / 2) <= 1e-12, f"worked example UAA {report.uaa}")
    rng = np.random.default_rng(0)
    for _ in range(1000):
        counts = rng.integers(0, 101, size=(2, 2))
        if counts.sum() == 0:
            continue
        values = compute_metrics(ConfusionMatrix(counts=counts.tolist())).values()
        for name, expected in naive_metrics(counts).items():
            _require(abs(values[name] - expected) <= 1e-12, f"{name} on {counts.tolist()}")
    return "1000 random matrices within 1e-12"


def reference_adam(p, g, m, v, t, lr, b1, b2, eps, wd):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    return p - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * wd * p, m, v


@invariant("Adam step matches the reference recurrence (100 steps)")
def check_adam_reference() -> str:
    rng = np.random.default_rng(0)
    cfg = TrainConfig(learning_rate=1e-2, weight_decay=0.1, max_epochs=20, early_stop_patience=5)
    param = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    state = AdamState.zeros({"w": param})
    p, m, v = param.data.copy(), np.zeros((3, 4)), np.zeros((3, 4))
    b1, b2 = cfg.adam_betas
    worst = 0.0
    for t in range(1, 101):
        g = rng.normal(size=(3, 4))
        adam_step({"w": param}, {"w": g}, state, cfg)
        p, m, v = reference_adam(p, g, m, v, t, cfg.learning_rate, b1, b2, cfg.adam_epsilon, cfg.weight_decay)
        worst = max(worst, float(np.max(np.abs(param.data - p))))
        _require(worst <= 1e-12, f"step {t}: deviation {worst:.2e}")
    return f"max deviation {worst:.2e}"


def _labelled(n: int, positives: int) -> List[MultimodalSample]:
    return [
        MultimodalSample(id=f"s{i:03d}", audio=np.zeros((1, 1)), video=np.zeros((1, 1)), label=int(i < positives))
        for i in range(n)
    ]


@invariant("fold plans are disjoint, exhaustive and stratified within one")
def check_fold_partition() -> str:
    checked = 0
    for n in range(2, 51):
        for positives in sorted({0, n // 3, n // 2, n}):
            samples = _labelled(n, positives)
            for k in sorted({2, min(10, n), n}):
                plan = plan_folds(samples, k=k, seed=n)
                folds = plan.folds()
                union = [i for fold in folds for i in fold]
                _require(sorted(union) == sorted(s.id for s in samples), f"n={n} k={k}: not exhaustive")
                _require(len(union) == len(set(union)), f"n={n} k={k}: folds overlap")
                pos = [sum(1 for i in fold if int(i[1:]) < positives) for fold in folds]
                _require(max(pos) - min(pos) <= 1, f"n={n} k={k}: positive counts {pos}")
                sizes = [len(fold) for fold in folds]
                _require(max(sizes) - min(sizes) <= 1, f"n={n} k={k}: sizes {sizes}")
                checked += 1
    return f"{checked} plans"


def _tiny_corpus(seed: int = 0, n: int = 12, mode: str = "both-redundant") -> List[MultimodalSample]:
    return generate_synthetic(SynthSpec(
        n_samples=n, audio_dim=3, video_dim=3, audio_length=(4, 6), video_length=(4, 6),
        mode=mode, separation=2.0, seed=seed,
    ))


@invariant("early stopping halts within patience of the best epoch")
def check_early_stopping() -> str:
    samples = _tiny_corpus()
    cfg = TrainConfig(max_epochs=6, early_stop_patience=2, learning_rate=1e-2, batch_size=4)
    outcome = train_one(toy_model_config("concat"), samples[:8], samples[8:], cfg)
    curves = outcome.curves
    _require(curves.epochs_trained <= min(cfg.max_epochs, curves.best_epoch + cfg.early_stop_patience),
             f"trained {curves.epochs_trained} epochs, best {curves.best_epoch}")
    frozen = cfg.model_copy(update={"learning_rate": 0.0, "early_stop_patience": 1})
    stalled = train_one(toy_model_config("concat"), samples[:8], samples[8:], frozen)
    _require(stalled.curves.epochs_trained == 2, f"frozen run trained {stalled.curves.epochs_trained} epochs")
    return f"stopped after {curves.epochs_trained} epochs (best {curves.best_epoch})"


@invariant("checkpoint save -> load -> forward is bit-exact")
def check_checkpoint_round_trip() -> str:
    samples = _tiny_corpus()
    cfg = TrainConfig(max_epochs=2, early_stop_patience=1, learning_rate=1e-2, batch_size=4)
    outcome = train_one(toy_model_config("IA"), samples[:8], samples[8:], cfg)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(outcome.checkpoint, Path(tmp) / "model.mmff")
        restored = load_checkpoint(path).build_model()
    before = outcome.model.predict_logits(samples)
    after = restored.predict_logits(samples)
    _require(np.array_equal(before, after), "reloaded model produces different logits")
    return f"{len(samples)} forwards identical"


@invariant("identical seeds give identical metric tables")
def check_determinism() -> str:
    samples = _tiny_corpus(n=12)
    cfg = TrainConfig(max_epochs=2, early_stop_patience=1, learning_rate=1e-2, batch_size=4, folds=3, n_jobs=1)
    tables = []
    for _ in range(2):
        result = run_cv(samples, toy_model_config("IT"), cfg)
        tables.append(metric_table([({"fold": f.fold}, f.report) for f in result.folds]).to_csv(index=False))
    _require(tables[0] == tables[1], "metric tables differ between identical runs")
    return "3-fold run reproduced"


@invariant("synthetic corpora are deterministic and survive a disk round trip")
def check_synthetic_round_trip() -> str:
    first, second = _tiny_corpus(seed=7), _tiny_corpus(seed=7)
    for a, b in zip(first, second):
        _require(a.id == b.id and np.array_equal(a.audio, b.audio) and np.array_equal(a.video, b.video),
                 f"sample {a.id} differs between identical seeds")
    with tempfile.TemporaryDirectory() as tmp:
        loaded = load_dataset(save_dataset(first, tmp, "synth"))
    for a, b in zip(first, loaded):
        _require(np.array_equal(a.audio, b.audio) and np.array_equal(a.video, b.video), f"{a.id} changed on disk")
    return f"{len(first)} samples bit-identical"


@invariant("xor corpora carry no per-modality class signal")
def check_xor_marginals() -> str:
    spec = SynthSpec(n_samples=2000, audio_dim=2, video_dim=2, audio_length=4, video_length=4,
                     mode="xor-crossmodal", separation=3.0, seed=0)
    samples = generate_synthetic(spec)
    labels = np.array([s.label for s in samples])
    for name, means in (("audio", [s.audio.mean() for s in samples]), ("video", [s.video.mean() for s in samples])):
        means = np.array(means)
        gap = abs(means[labels == 1].mean() - means[labels == 0].mean())
        _require(gap <= 0.15 * spec.separation, f"{name} class-mean gap {gap:.3f}")
    return "class-mean gaps within 0.15 * separation"


# -- acceptance experiments -------------------------------------------------------


def _fold_accuracies(result) -> List[float]:
    return [f.report.waa for f in result.folds]


@invariant("xor task: fusion >= 0.85 and unimodal <= 0.60 accuracy on 8 of 10 folds", slow=True)
def check_xor_acceptance() -> str:
    samples = generate_synthetic(SynthSpec(
        n_samples=400, audio_dim=6, video_dim=5, audio_length=12, video_length=10,
        mode="xor-crossmodal", separation=3.0, seed=0,
    ))
    cfg = desk_train_config(max_epochs=60)
    summary = []
    for strategy in ("LT", "IT", "IA", "audio", "video"):
        accs = _fold_accuracies(run_cv(samples, desk_model_config(strategy), cfg))
        unimodal = strategy in ("audio", "video")
        hits = sum(1 for a in accs if (a <= 0.60 if unimodal else a >= 0.85))
        _require(hits >= 8, f"{strategy}: only {hits}/10 folds meet the bound (accuracies {np.round(accs, 3)})")
        summary.append(f"{strategy}={np.mean(accs):.3f}")
    return ", ".join(summary)


@invariant("both-redundant task: every fusion reaches WAF1 >= 0.95 within 50 epochs", slow=True)
def check_trainability_acceptance() -> str:
    samples = generate_synthetic(SynthSpec(
        n_samples=200, audio_dim=6, video_dim=5, audio_length=12, video_length=10,
        mode="both-redundant", separation=2.0, seed=1,
    ))
    cfg = desk_train_config(max_epochs=50)
    summary = []
    for strategy in ("LT", "IT", "IA") + tuple(s.value for s in BASELINE_STRATEGIES):
        waf1 = run_cv(samples, desk_model_config(strategy), cfg).aggregate.waf1
        _require(waf1 >= 0.95, f"{strategy}: aggregate WAF1 {waf1:.3f}")
        summary.append(f"{strategy}={waf1:.3f}")
    return ", ".join(summary)


@invariant("cross-corpus WAF1 within 0.1 of in-corpus WAF1 (IA)", slow=True)
def check_cross_corpus_acceptance() -> str:
    def corpus(seed: int):
        return generate_synthetic(SynthSpec(
            name=f"corpus{seed}", n_samples=200, audio_dim=6, video_dim=5, audio_length=12, video_length=10,
            mode="both-redundant", separation=2.0, seed=seed,
        ))

    first, second = corpus(11), corpus(12)
    cfg = desk_train_config(max_epochs=40)
    model_cfg = desk_model_config("IA")
    in_corpus = run_cv(first, model_cfg, cfg).aggregate.waf1
    cross = run_cross_corpus(first, second, model_cfg, cfg).aggregate.waf1
    _require(abs(cross - in_corpus) <= 0.1, f"cross {cross:.3f} vs in-corpus {in_corpus:.3f}")
    return f"in-corpus {in_corpus:.3f}, cross-corpus {cross:.3f}"


# -- runner -----------------------------------------------------------------------


def run_suite(acceptance: bool = False, only: Optional[Sequence[str]] = None) -> List[PropertyResult]:
    """Runs every registered property (slow ones only with ``acceptance``)."""
    results = []
    for prop in _REGISTRY:
        if prop.slow and not acceptance:
            continue
        if only and not any(token in prop.name for token in only):
            continue
        start = time.perf_counter()
        try:
            detail = prop.fn()
            passed = True
        except Exception as e:
            detail = f"{type(e).__name__}: {e}"
            passed = False
        seconds = time.perf_counter() - start
        logger.info("%s %s (%.1fs): %s", "PASS" if passed else "FAIL", prop.name, seconds, detail)
        results.append(PropertyResult(prop.name, passed, detail, seconds))
    return results


def property_names(acceptance: bool = False) -> List[str]:
    return [p.name for p in _REGISTRY if acceptance or not p.slow]
