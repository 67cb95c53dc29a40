#!/usr/bin/env python3
"""DeFusion command line.

Sub-commands:
- gen-data         write a synthetic cohort (images + indicator table)
- train            train on all folds but one, save a checkpoint and report
- cross-validate   k-fold evaluation, mean(std) per metric
- ablate           run a grid of variants under one seed and fold plan
- diagnose         correlation matrix and feature dump from a checkpoint
- gradcheck        finite-difference checks of every op and tiny models
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional

SCRIPT_DIR = Path(__file__).resolve().parent
ROOT_DIR = SCRIPT_DIR.parent
BACKEND_DIR = ROOT_DIR / "backend"

# Add backend to path for imports
sys.path.insert(0, str(BACKEND_DIR))

from dataset.synthetic import GeneratorSpec, generate  # noqa: E402
from errors import ConfigError, DeFusionError  # noqa: E402
from evaluation.diagnostics import feature_dump, pcc_matrix  # noqa: E402
from evaluation.metrics import MetricReport  # noqa: E402
from experiments.config import ExperimentConfig, resolve_config  # noqa: E402
from experiments.gradcheck_suite import run_suite  # noqa: E402
from experiments.reports import (  # noqa: E402
    FoldLog,
    RunReport,
    VariantLog,
    decoupling_note,
    write_ablation_table,
    write_timing,
)
from experiments.runner import (  # noqa: E402
    ExperimentData,
    ablate,
    cross_validate,
    default_workers,
    diagnose,
    load_fold_checkpoint,
    pooled_features,
    run_fold,
    save_fold_checkpoint,
    summarize,
)
from logging_setup import configure_logging, run_context  # noqa: E402
from models.registry import GRID_GROUPS, VariantRegistry, load_variant_file  # noqa: E402
from runtime_paths import get_run_dir, get_runtime_home  # noqa: E402
from version import get_version_string  # noqa: E402

LOGGER = logging.getLogger("defusion.cli")

CHECKPOINT_FILE = "model.safetensors"

# CLI flag -> ExperimentConfig field
CONFIG_FLAGS = {
    "image_size": int,
    "resize": int,
    "stride": int,
    "channels": int,
    "res_blocks": int,
    "d_img": int,
    "d_tab": int,
    "d_f": int,
    "m": int,
    "heads": int,
    "img_layers": int,
    "tab_layers": int,
    "mlp_ratio": int,
    "fusion_hidden": int,
    "classifier_hidden": int,
    "num_days": int,
    "num_indicators": int,
    "lr_img": float,
    "lr_tab": float,
    "lr_fusion": float,
    "epochs": int,
    "pretrain_epochs": int,
    "lambda_warmup": int,
    "batch_size": int,
    "k": int,
    "seed": int,
}
CHOICE_FLAGS = {
    "pe": ("none", "sincos", "learnable", "stpe", "stpe_no_spe", "stpe_no_tpe", "stpe_no_att"),
    "fusion": ("decoupling", "concat", "add"),
    "modality": ("multimodal", "image", "table"),
    "classifier_input": ("decoupled", "reconstructed"),
    "dtype": ("float32", "float64"),
    "image_normalization": ("fixed", "dataset"),
}


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, help="Dataset directory written by gen-data")
    parser.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    parser.add_argument(
        "--profile",
        choices=("desk", "paper", "full"),
        help="Default set (desk: 32x32; paper: 224x224, also accepted as full)",
    )
    parser.add_argument("--out", type=Path, help="Run directory (default: <output dir>/<command>-<config hash>)")
    parser.add_argument("--workers", type=int, help="Parallel fold jobs (default: physical cores)")
    for name, kind in CONFIG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)
    for name, choices in CHOICE_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, choices=choices)
    parser.add_argument("--days", help="Day subset, e.g. 1,2,3")
    parser.add_argument("--lambda", dest="lam", type=float, help="Weight of the cross-reconstruction loss")
    parser.add_argument("--no-stratify", dest="stratified", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="DeFusion multi-modal experiments")
    parser.add_argument("--log-level", help="Overrides DEFUSION_LOG_LEVEL")
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_version_string()}")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Write a synthetic cohort")
    gen.add_argument("--out", type=Path, help="Dataset directory (default: <runtime home>/data/synthetic-<seed>)")
    gen.add_argument("--n", dest="n_cases", type=int, default=2000)
    gen.add_argument("--image-size", type=int, default=36)
    gen.add_argument("--days", dest="num_days", type=int, default=3)
    gen.add_argument("--indicators", dest="num_indicators", type=int, default=22)
    gen.add_argument("--missing-rate", type=float, default=0.05)
    gen.add_argument("--noise", dest="noise_sigma", type=float, default=0.05)
    gen.add_argument("--shared-signal", dest="shared_signal_strength", type=float, default=1.0)
    gen.add_argument(
        "--label-weights",
        type=float,
        nargs=3,
        default=[4.0, 3.0, 3.0],
        metavar=("SHARED", "IMAGE", "TABLE"),
        help="Logit weights of the shared, image-only and table-only latents",
    )
    gen.add_argument("--latent-dim", type=int, default=2)
    gen.add_argument("--indicator-noise", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--workers", type=int)

    train = commands.add_parser("train", help="Train on k-1 folds, evaluate on the held-out fold")
    _add_experiment_flags(train)
    train.add_argument("--holdout-fold", type=int)

    cv = commands.add_parser("cross-validate", help="k-fold cross-validation")
    _add_experiment_flags(cv)

    abl = commands.add_parser("ablate", help="Run a variant grid")
    _add_experiment_flags(abl)
    abl.add_argument("--grid", nargs="+", default=["pe"], help=f"Grid names ({', '.join(GRID_GROUPS)}) or variants")
    abl.add_argument("--variants-file", type=Path, help="JSON list of {name, overrides} rows")

    diag = commands.add_parser("diagnose", help="Correlation matrix of decoupled features")
    diag.add_argument("--checkpoint", type=Path, required=True)
    diag.add_argument("--data", type=Path, help="Dataset directory (default: the one the checkpoint was trained on)")
    diag.add_argument("--out", type=Path)
    diag.add_argument("--workers", type=int)

    grad = commands.add_parser("gradcheck", help="Finite-difference gradient checks")
    grad.add_argument("--ops", nargs="*", help="Only check these ops")
    grad.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {name: getattr(args, name, None) for name in (*CONFIG_FLAGS, *CHOICE_FLAGS)}
    overrides.update(
        profile=args.profile,
        days=args.days,
        lam=args.lam,
        stratified=args.stratified,
        holdout_fold=getattr(args, "holdout_fold", None),
        dataset=str(args.data) if args.data else None,
    )
    cfg = resolve_config(config_file=args.config, overrides=overrides)
    if not cfg.dataset:
        raise ConfigError("no dataset: pass --data or set 'dataset' in the config file")
    return cfg


def _run_dir(args: argparse.Namespace, command: str, cfg: ExperimentConfig) -> Path:
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.out
    return get_run_dir(command, cfg.digest())


def _fold_log(outcome) -> FoldLog:
    return FoldLog.build(
        fold=outcome.fold,
        n_train=outcome.n_train,
        n_test=len(outcome.predictions.case_ids),
        metrics=outcome.metrics,
        provenance=outcome.stats.to_dict()["provenance"],
        history=outcome.history,
        pretrain=outcome.pretrain,
    )


# ─── Commands ────────────────────────────────────────────────────────


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(
        n_cases=args.n_cases,
        image_size=args.image_size,
        num_days=args.num_days,
        num_indicators=args.num_indicators,
        missing_rate=args.missing_rate,
        noise_sigma=args.noise_sigma,
        shared_signal_strength=args.shared_signal_strength,
        latent_dim=args.latent_dim,
        label_weights=tuple(args.label_weights),
        indicator_noise=args.indicator_noise,
        seed=args.seed,
    )
    out = args.out or (get_runtime_home() / "data" / f"synthetic-{args.seed}")
    started = time.perf_counter()
    generate(spec, out, workers=args.workers)
    LOGGER.info("Wrote %d cases to %s in %.1fs", spec.n_cases, out, time.perf_counter() - started)
    print(out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    run_id = cfg.digest()
    out = _run_dir(args, "train", cfg)
    started = time.perf_counter()
    data = ExperimentData.load(Path(cfg.dataset), workers=args.workers)
    outcome = run_fold(cfg, data, cfg.holdout_fold, run_id)
    checkpoint = save_fold_checkpoint(out / CHECKPOINT_FILE, cfg, outcome)
    metrics = summarize([outcome])
    metrics.write_csv(out / "metrics.csv")
    report = RunReport.for_config(
        "train",
        cfg,
        folds=[_fold_log(outcome)],
        metrics=metrics,
        artifacts={"checkpoint": CHECKPOINT_FILE, "metrics": "metrics.csv"},
    )
    report_path = report.write(out)
    write_timing(out, time.perf_counter() - started, workers=1)
    LOGGER.info("Checkpoint %s, report %s", checkpoint, report_path, extra=run_context(run_id))
    print(f"AUC {metrics.auc.mean:.4f}  F1 {metrics.f1.mean:.4f}  ACC {metrics.accuracy.mean:.4f}")
    print(out)
    return 0


def cmd_cross_validate(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    run_id = cfg.digest()
    out = _run_dir(args, "cross-validate", cfg)
    started = time.perf_counter()
    data = ExperimentData.load(Path(cfg.dataset), workers=args.workers)
    workers = args.workers or default_workers(cfg.k)
    outcomes = cross_validate(cfg, data, workers=workers, run_id=run_id)
    metrics = summarize(outcomes)
    metrics.write_csv(out / "metrics.csv")
    artifacts = {"metrics": "metrics.csv"}
    pcc = None
    pooled = pooled_features(outcomes)
    if pooled is not None:
        case_ids, features = pooled
        pcc = pcc_matrix(features)
        pcc.write_json(out / "pcc.json")
        pcc.write_csv(out / "pcc.csv")
        feature_dump(case_ids, features, out / "features.csv")
        artifacts.update(pcc="pcc.json", pcc_csv="pcc.csv", features="features.csv")
    note = decoupling_note(data.manifest.generator or {}, pcc)
    report = RunReport.for_config(
        "cross-validate",
        cfg,
        folds=[_fold_log(o) for o in outcomes],
        metrics=metrics,
        pcc=pcc,
        artifacts=artifacts,
        notes=[note] if note else [],
    )
    report.write(out)
    write_timing(out, time.perf_counter() - started, workers=workers)
    for name in ("auc", "f1", "accuracy"):
        print(f"{name:<9} {getattr(metrics, name).render()}")
    print(out)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    registry = VariantRegistry()
    variants = load_variant_file(args.variants_file) if args.variants_file else registry.resolve(args.grid)
    run_id = cfg.digest()
    out = _run_dir(args, "ablate", cfg)
    started = time.perf_counter()
    data = ExperimentData.load(Path(cfg.dataset), workers=args.workers)
    workers = args.workers or default_workers(cfg.k * len(variants))
    rows = ablate(cfg, variants, data, workers=workers, run_id=run_id)
    logs = [
        VariantLog(
            name=row.variant.name,
            label=row.variant.label,
            group=row.variant.group,
            overrides=row.variant.override_dict(),
            config_digest=row.config.digest(),
            metrics=row.report,
        )
        for row in rows
    ]
    write_ablation_table(out, logs)
    report = RunReport.for_config(
        "ablate",
        cfg,
        variants=logs,
        artifacts={"ablation": "ablation.csv", "ablation_json": "ablation.json"},
    )
    report.write(out)
    write_timing(out, time.perf_counter() - started, workers=workers, extra={"variants": len(variants)})
    for log in logs:
        print(f"{log.label:<24} AUC {log.metrics.auc.render()}  F1 {log.metrics.f1.render()}")
    print(out)
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    checkpoint = load_fold_checkpoint(args.checkpoint)
    cfg = checkpoint.config
    if args.data is not None:
        cfg = cfg.with_overrides(dataset=str(args.data))
        checkpoint.config = cfg
    if not cfg.dataset:
        raise ConfigError("checkpoint does not name a dataset: pass --data")
    out = args.out or args.checkpoint.resolve().parent
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    data = ExperimentData.load(Path(cfg.dataset), workers=args.workers)
    result = diagnose(checkpoint, data)
    result.pcc.write_json(out / "pcc.json")
    result.pcc.write_csv(out / "pcc.csv")
    feature_dump(result.predictions.case_ids, result.predictions.features, out / "features.csv")
    note = decoupling_note(data.manifest.generator or {}, result.pcc)
    report = RunReport.for_config(
        "diagnose",
        cfg,
        metrics=MetricReport.from_fold_metrics([result.metrics]),
        pcc=result.pcc,
        artifacts={"pcc": "pcc.json", "pcc_csv": "pcc.csv", "features": "features.csv"},
        notes=[note] if note else [],
    )
    report.write(out)
    write_timing(out, time.perf_counter() - started, workers=1)
    for kind, row in zip(result.pcc.kinds, result.pcc.matrix):
        print(f"{kind:<14} " + " ".join(f"{v:.3f}" for v in row))
    print(out)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_suite(ops_only=args.ops or None, seed=args.seed)
    print(report.render())
    return 0 if report.passed else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "cross-validate": cmd_cross_validate,
    "ablate": cmd_ablate,
    "diagnose": cmd_diagnose,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except DeFusionError as exc:
        LOGGER.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
