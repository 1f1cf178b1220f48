import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from data.loader import load_dataset, save_dataset
from data.schema import SynthSpec
from data.synthetic import generate_synthetic
from evaluation.reports import metric_table, write_predictions, write_report, write_table
from models.schema import ModelConfig
from training.checkpoint import load_checkpoint
from training.experiments import adapt_feature_dims, run_ablation, run_cross_corpus, run_cv
from training.schema import ExperimentResult, TrainConfig
from training.trainer import evaluate_model
from utils.config import (
    ARTIFACT_VERSION,
    LOG_LEVEL,
    OUTPUT_DIR,
    config_echo,
    ensure_output_dir,
    fold_threads,
    load_experiment_config,
    read_config_file,
)
from utils.errors import ConfigurationError, MMFFError
from utils.logging_setup import configure_logging
from verification.invariants import run_suite

COMMANDS = ("train", "evaluate", "ablate", "cross-corpus", "synth-gen", "verify")
USAGE_ERROR_KINDS = {"config", "argument", "ingest", "checkpoint"}


class RunSpec(BaseModel):
    command: Literal["train", "evaluate", "ablate", "cross-corpus", "synth-gen", "verify"]
    config: Optional[str] = Field(None, description="Flat JSON experiment config")
    out: Optional[str] = Field(None, description="Output directory (default: $MMFF_OUTPUT_DIR/<command>)")
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64, description="Overrides the config seed")
    fusion: Optional[str] = Field(None, description="Overrides the config fusion strategy")
    dataset: Optional[str] = None
    train_dataset: Optional[str] = None
    test_dataset: Optional[str] = None
    spec: Optional[str] = Field(None, description="Synthetic dataset spec (synth-gen)")
    checkpoint: Optional[str] = Field(None, description="Checkpoint to evaluate")
    acceptance: bool = Field(False, description="verify: also run the long synthetic experiments")

    @property
    def output_dir(self) -> Path:
        return Path(self.out) if self.out else Path(OUTPUT_DIR) / self.command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmff", description="Audio-visual fusion transformers: training, evaluation and verification"
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat JSON config; flags override its keys")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed (u64)")
    parser.add_argument("--fusion", help="fusion strategy: LT, IT, IA, add, multi, concat, tf, audio, video")
    parser.add_argument("--dataset", help="dataset manifest (train, evaluate, ablate)")
    parser.add_argument("--train-dataset", dest="train_dataset", help="cross-corpus training manifest")
    parser.add_argument("--test-dataset", dest="test_dataset", help="cross-corpus test manifest")
    parser.add_argument("--spec", help="synthetic dataset spec (synth-gen)")
    parser.add_argument("--checkpoint", help="checkpoint file (evaluate)")
    parser.add_argument("--acceptance", action="store_true", help="verify: run the acceptance experiments too")
    return parser


def parse_run_spec(argv: Optional[Sequence[str]] = None) -> RunSpec:
    args = build_parser().parse_args(argv)
    try:
        return RunSpec(**vars(args))
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigurationError(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}")


def load_configs(spec: RunSpec) -> Tuple[ModelConfig, TrainConfig]:
    return load_experiment_config(spec.config, {"seed": spec.seed, "fusion": spec.fusion})


def require(value: Optional[str], flag: str, command: str) -> str:
    if not value:
        raise ConfigurationError(f"{command} needs {flag}")
    return value


def write_run_record(out: Path, spec: RunSpec, model_cfg: ModelConfig, train_cfg: TrainConfig,
                     extra: Optional[Dict[str, Any]] = None) -> Path:
    """Everything needed to re-run the command: resolved config, inputs, seed and artifact version."""
    record = {
        "artifact_version": ARTIFACT_VERSION,
        "command": spec.command,
        "run_spec": spec.model_dump(mode="json"),
        "seed": train_cfg.seed,
        "config": config_echo(model_cfg, train_cfg),
    }
    record.update(extra or {})
    path = out / "run_record.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_curves(out: Path, results: Dict[str, ExperimentResult]) -> Path:
    curves = {
        name: [{"repeat": f.repeat, "fold": f.fold, **f.curves.model_dump()} for f in result.folds]
        for name, result in results.items()
    }
    path = out / "curves.json"
    path.write_text(json.dumps(curves, indent=2) + "\n", encoding="utf-8")
    return path


def print_summary(label: str, result: ExperimentResult) -> None:
    agg = result.aggregate
    print(f"📊 {label}: WAA {agg.waa:.4f}  WAF1 {agg.waf1:.4f}  UAA {agg.uaa:.4f}  UAF1 {agg.uaf1:.4f}"
          f"  ({len(result.folds)} run(s), {result.seconds:.1f}s)")
    if agg.flags:
        print(f"⚠️  {len(agg.flags)} zero-division metric cell(s) defined as 0")


# -- commands -------------------------------------------------------------------


def cmd_train(spec: RunSpec) -> int:
    model_cfg, train_cfg = load_configs(spec)
    manifest = require(spec.dataset, "--dataset", "train")
    out = ensure_output_dir(spec.output_dir)

    print(f"🚀 Cross-validating {model_cfg.fusion.value} on {manifest}")
    samples = load_dataset(manifest, n_jobs=fold_threads())
    print(f"✅ Loaded {len(samples)} samples")
    result = run_cv(samples, model_cfg, train_cfg, checkpoint_dir=out / "checkpoints")

    for fold in result.folds:
        name = f"fold_{fold.fold:02d}.csv" if train_cfg.repeats == 1 else f"fold_r{fold.repeat:02d}_{fold.fold:02d}.csv"
        write_report(fold.report, out / "folds" / name, repeat=fold.repeat, fold=fold.fold)
    write_report(result.aggregate, out / "aggregate.csv", strategy=result.strategy)
    if result.repeat_aggregate is not None:
        write_report(result.repeat_aggregate, out / "repeat_aggregate.csv", strategy=result.strategy)
    write_curves(out, {result.strategy: result})
    write_run_record(out, spec, model_cfg, train_cfg, {"dataset": manifest, "samples": len(samples)})

    print_summary(result.strategy, result)
    print(f"✅ Results written to {out}")
    return 0


def cmd_evaluate(spec: RunSpec) -> int:
    _, train_cfg = load_configs(spec)
    checkpoint_path = require(spec.checkpoint, "--checkpoint", "evaluate")
    manifest = require(spec.dataset, "--dataset", "evaluate")
    out = ensure_output_dir(spec.output_dir)

    checkpoint = load_checkpoint(checkpoint_path)
    model = checkpoint.build_model()
    print(f"🔄 Evaluating {model.strategy.value} checkpoint {checkpoint_path} (epoch {checkpoint.epoch})")
    samples = load_dataset(manifest, n_jobs=fold_threads())
    samples = adapt_feature_dims(samples, model.config.audio_dim, model.config.video_dim)
    evaluation = evaluate_model(model, samples)

    write_report(evaluation.report, out / "evaluation.csv", strategy=model.strategy.value, samples=len(samples))
    write_predictions(evaluation.ids, evaluation.labels, evaluation.predicted, evaluation.probabilities,
                      out / "predictions.csv")
    write_run_record(out, spec, checkpoint.model_config(), train_cfg,
                     {"dataset": manifest, "checkpoint": checkpoint_path})
    r = evaluation.report
    print(f"📊 WAA {r.waa:.4f}  WAF1 {r.waf1:.4f}  UAA {r.uaa:.4f}  UAF1 {r.uaf1:.4f}  loss {evaluation.loss:.4f}")
    print(f"✅ Results written to {out}")
    return 0


def cmd_ablate(spec: RunSpec) -> int:
    model_cfg, train_cfg = load_configs(spec)
    manifest = require(spec.dataset, "--dataset", "ablate")
    out = ensure_output_dir(spec.output_dir)

    samples = load_dataset(manifest, n_jobs=fold_threads())
    print(f"🚀 Ablation over {len(samples)} samples")
    results = run_ablation(samples, model_cfg, train_cfg, checkpoint_dir=out / "checkpoints")

    write_table(metric_table([({"strategy": name}, r.aggregate) for name, r in results.items()]),
                out / "ablation.csv")
    write_curves(out, results)
    write_run_record(out, spec, model_cfg, train_cfg, {"dataset": manifest, "strategies": list(results)})
    for name, result in results.items():
        print_summary(name, result)
    print(f"✅ Results written to {out}")
    return 0


def cmd_cross_corpus(spec: RunSpec) -> int:
    model_cfg, train_cfg = load_configs(spec)
    first_path = require(spec.train_dataset, "--train-dataset", "cross-corpus")
    second_path = require(spec.test_dataset, "--test-dataset", "cross-corpus")
    out = ensure_output_dir(spec.output_dir)

    first = load_dataset(first_path, n_jobs=fold_threads())
    second = load_dataset(second_path, n_jobs=fold_threads())
    rows, results = [], {}
    for (train_name, train), (test_name, test) in (
        ((first_path, first), (second_path, second)),
        ((second_path, second), (first_path, first)),
    ):
        direction = f"{train_name} -> {test_name}"
        print(f"🔄 Cross-corpus {model_cfg.fusion.value}: {direction}")
        result = run_cross_corpus(
            train, test, model_cfg, train_cfg, checkpoint_path=out / "checkpoints" / f"{len(rows)}.mmff"
        )
        rows.append(({"train": train_name, "test": test_name, "strategy": result.strategy}, result.aggregate))
        results[direction] = result
        print_summary(direction, result)

    write_table(metric_table(rows), out / "cross_corpus.csv")
    write_curves(out, results)
    write_run_record(out, spec, model_cfg, train_cfg, {"train_dataset": first_path, "test_dataset": second_path})
    print(f"✅ Results written to {out}")
    return 0


def cmd_synth_gen(spec: RunSpec) -> int:
    model_cfg, train_cfg = load_configs(spec)
    raw = read_config_file(require(spec.spec, "--spec", "synth-gen"))
    if spec.seed is not None:
        raw["seed"] = spec.seed
    try:
        synth = SynthSpec(**raw)
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigurationError(f"synthetic spec {spec.spec}: {'.'.join(str(p) for p in err['loc'])}: {err['msg']}")
    out = ensure_output_dir(spec.output_dir)

    samples = generate_synthetic(synth)
    manifest = save_dataset(samples, out, name=synth.name)
    write_run_record(out, spec, model_cfg, train_cfg, {"synth_spec": synth.model_dump(mode="json")})
    print(f"✅ Wrote {len(samples)} {synth.mode} samples; manifest {manifest}")
    return 0


def cmd_verify(spec: RunSpec) -> int:
    model_cfg, train_cfg = load_configs(spec)
    print(f"🔄 Running the property suite{' with acceptance experiments' if spec.acceptance else ''}")
    results = run_suite(acceptance=spec.acceptance)
    for r in results:
        print(f"{'✅' if r.passed else '❌'} {r.name} ({r.seconds:.1f}s): {r.detail}")
    failed = [r for r in results if not r.passed]

    if spec.out:
        out = ensure_output_dir(spec.output_dir)
        frame = pd.DataFrame([{"property": r.name, "passed": r.passed, "detail": r.detail} for r in results])
        write_table(frame, out / "verify.csv")
        write_run_record(out, spec, model_cfg, train_cfg, {"failed": [r.name for r in failed]})

    print(f"📊 {len(results) - len(failed)}/{len(results)} properties hold")
    return 1 if failed else 0


HANDLERS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "cross-corpus": cmd_cross_corpus,
    "synth-gen": cmd_synth_gen,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(LOG_LEVEL)
    try:
        spec = parse_run_spec(argv)
        return HANDLERS[spec.command](spec)
    except MMFFError as e:
        print(f"error[{e.kind}]: {e}", file=sys.stderr)
        return 2 if e.kind in USAGE_ERROR_KINDS else 1
    except ValidationError as e:
        err = e.errors()[0]
        print(f"error[config]: {'.'.join(str(p) for p in err['loc'])}: {err['msg']}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("\n👋 Interrupted by user.", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
