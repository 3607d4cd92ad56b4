"""
Command-line entry point.

Exit codes: 0 success, 1 ingestion error, 2 numerical failure (including a
failed gradient check), 3 invalid flags or configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from . import __version__, settings, storage_db, storage_runs
from .active_learning import aggregate_traces, compare_policies, run_active_learning
from .bench import format_rank_table, load_accuracy_table, rank_report
from .data import (
    DEFAULT_LABEL_COLUMN,
    apply_standardization,
    encode_labels,
    load_csv,
    load_features,
    make_blobs,
    save_csv,
    train_test_split,
)
from .errors import ConfigurationError, DomainError, IngestionError, NumericalError
from .gradcheck import run_gradcheck
from .io_helpers import load_model, save_model, utc_now, write_frame, write_manifest
from .model_core import ModelState
from .models import ALConfig, KernelHyperparams, RunManifest, StandardizationStats, TrainConfig
from .predict import DEFAULT_VR_SAMPLES, accuracy, decide, predict_dist, variation_ratio
from .trainers import train

logger = logging.getLogger("bsvm.cli")

EXIT_OK = 0
EXIT_INGESTION = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class CommandResult:
    outputs: List[Path] = field(default_factory=list)
    manifest_path: Optional[Path] = None
    config: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    metrics: Dict[str, float] = field(default_factory=dict)
    exit_code: int = EXIT_OK


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}{suffix}")


def _timed(timings: Dict[str, float], phase: str, fn: Callable[[], Any]) -> Any:
    start = time.perf_counter()
    try:
        return fn()
    finally:
        timings[phase] = time.perf_counter() - start


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> CommandResult:
    cfg = TrainConfig(
        method=args.method,
        epochs=args.epochs,
        learning_rate=args.lr,
        rho=args.rho,
        rho_decay=args.rho_decay,
        seed=args.seed,
        hyperopt_every=args.hyperopt_every,
        hyper_learning_rate=args.hyper_lr,
        batch_size=args.batch_size,
        alpha_update=args.alpha_update,
    )
    result = CommandResult(config={"train": cfg.model_dump()})
    d = _timed(result.timings, "load", lambda: load_csv(args.data, args.label))
    means, stds = d.X.mean(axis=0), d.X.std(axis=0)
    X = (d.X - means) / stds

    def fit() -> tuple[ModelState, Any]:
        state = ModelState.initialize(X, d.class_count, args.inducing, seed=args.seed, ard=args.ard, jitter=args.jitter)
        state.standardization = StandardizationStats(
            feature_names=list(d.feature_names),
            means=means.tolist(),
            stds=stds.tolist(),
        )
        state.label_names = list(d.label_names)
        result.config["hyper"] = state.hyper.model_dump()
        return train(state, X, d.y, cfg)

    state, trace = _timed(result.timings, "train", fit)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else _sidecar(out, ".trace.csv")
    save_model(state, out)
    write_frame(trace.to_frame(timings=args.record_timings), trace_path)
    result.outputs = [out, trace_path]
    result.manifest_path = _sidecar(out, ".manifest.json")
    if trace.final is not None:
        result.metrics["final_elbo"] = trace.final
    logger.info("trained %s on %d points, %d classes; model written to %s", cfg.method, d.n_points, d.class_count, out)
    return result


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def cmd_predict(args: argparse.Namespace) -> CommandResult:
    result = CommandResult(config={"samples": args.samples, "seed": args.seed})
    state = load_model(args.model)
    stats = state.standardization
    X_raw, labels = load_features(args.data, stats.feature_names, label_column=args.label)
    X = apply_standardization(X_raw, stats)
    dist = _timed(result.timings, "predict", lambda: predict_dist(state, X))
    predicted = decide(dist)
    vr = variation_ratio(dist, args.samples, args.seed)
    names = np.asarray(state.label_names or [str(c) for c in range(1, state.n_classes + 1)], dtype=object)
    frame = pd.DataFrame(
        {
            "index": np.arange(dist.n_points, dtype=np.int64),
            "predicted_class": names[predicted - 1],
            "variation_ratio": vr,
        }
    )
    for j in range(state.n_classes):
        frame[f"mean_{j + 1}"] = dist.means[:, j]
    for j in range(state.n_classes):
        frame[f"var_{j + 1}"] = dist.variances[:, j]
    out = Path(args.out)
    write_frame(frame, out)
    if labels is not None:
        truth = encode_labels(labels, names.tolist())
        result.metrics["accuracy"] = accuracy(predicted, truth)
        print(f"accuracy {result.metrics['accuracy']:.6f} on {truth.size} points")
    result.outputs = [out]
    result.manifest_path = _sidecar(out, ".manifest.json")
    return result


# ---------------------------------------------------------------------------
# active-learn
# ---------------------------------------------------------------------------

def _al_datasets(args: argparse.Namespace):
    if args.data:
        d = load_csv(args.data, args.label)
        return train_test_split(d, args.test_fraction, seed=args.seed)
    total = args.n_pool + args.n_test
    d = make_blobs(total, args.classes, args.dims, args.separation, seed=args.seed)
    return train_test_split(d, args.n_test / total, seed=args.seed)


def cmd_active_learn(args: argparse.Namespace) -> CommandResult:
    policies = ["variation_ratio", "mean_entropy"] if args.policy == "both" else [args.policy]
    seeds = [args.seed + k for k in range(args.n_seeds)]
    base = ALConfig(
        policy=policies[0],
        budget=args.budget,
        inducing_points=args.inducing,
        retrain_epochs=args.retrain_epochs,
        seeds=seeds,
        vr_samples=args.samples,
        learning_rate=args.lr,
        jitter=args.jitter,
        threads=args.threads,
    )
    result = CommandResult(config={"active_learning": base.model_dump(), "policies": policies})
    pool, test = _timed(result.timings, "data", lambda: _al_datasets(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_policy = {}
    for policy in policies:
        cfg = base.model_copy(update={"policy": policy})
        traces = _timed(result.timings, policy, lambda: run_active_learning(pool, test, cfg))
        per_policy[policy] = list(traces.values())
        for seed, trace in traces.items():
            path = out_dir / f"trace_{policy}_seed{seed}.csv"
            write_frame(trace.to_frame(), path)
            result.outputs.append(path)
        agg = aggregate_traces(per_policy[policy])
        path = out_dir / f"aggregate_{policy}.csv"
        write_frame(agg, path)
        result.outputs.append(path)
        result.metrics[f"{policy}_final_error"] = float(agg["mean_error"].iloc[-1])
    if len(policies) > 1:
        path = out_dir / "comparison.csv"
        write_frame(compare_policies(per_policy), path)
        result.outputs.append(path)
    result.manifest_path = out_dir / "manifest.json"
    return result


# ---------------------------------------------------------------------------
# rank / gradcheck / synth / runs
# ---------------------------------------------------------------------------

def cmd_rank(args: argparse.Namespace) -> CommandResult:
    table = load_accuracy_table(args.table)
    report = rank_report(table)
    out = Path(args.out)
    write_frame(report, out)
    print(format_rank_table(report))
    return CommandResult(outputs=[out], manifest_path=_sidecar(out, ".manifest.json"))


def cmd_gradcheck(args: argparse.Namespace) -> CommandResult:
    result = CommandResult()
    report = _timed(
        result.timings,
        "gradcheck",
        lambda: run_gradcheck(
            args.seed,
            n_points=args.points,
            n_classes=args.classes,
            n_inducing=args.inducing,
            dims=args.dims,
            perturb_analytic=args.perturb_analytic,
        ),
    )
    text = report.format()
    print(text)
    for name, block in report.blocks.items():
        result.metrics[f"{name}_max_rel_error"] = block.max_rel_error
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n", encoding="utf-8")
        result.outputs = [out]
        result.manifest_path = _sidecar(out, ".manifest.json")
    if not report.passed:
        worst = report.worst
        print(f"gradient check failed: {worst.name}{worst.worst_index} relative error {worst.max_rel_error:.3e}", file=sys.stderr)
        result.exit_code = EXIT_NUMERICAL
    return result


def cmd_synth(args: argparse.Namespace) -> CommandResult:
    d = make_blobs(args.n, args.classes, args.dims, args.separation, seed=args.seed)
    out = Path(args.out)
    save_csv(d, out, label_column=args.label)
    return CommandResult(outputs=[out], manifest_path=_sidecar(out, ".manifest.json"))


def cmd_runs(args: argparse.Namespace) -> CommandResult:
    rows = storage_runs.list_runs(limit=args.limit, command=args.command_filter)
    if storage_runs.engine is None:
        print("no run ledger configured (set BSVM_DATA_DIR or pass --ledger)", file=sys.stderr)
    for row in rows:
        print(f"{row['run_id']:>5}  {row['started_at']:<25}  {row['command']:<13} exit={row['exit_code']}  seed={row['seed']}")
    return CommandResult()


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, *, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=0, help="Seed for every random choice.")
    p.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    p.add_argument("--ledger", default=None, help="Directory of the run ledger (default: $BSVM_DATA_DIR, unset = off).")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="bsvm", description="Sparse variational multi-class Bayesian SVM.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Fit a model to a CSV file.", formatter_class=fmt)
    p.add_argument("--data", required=True, help="Training CSV with a header row.")
    p.add_argument("--label", default=DEFAULT_LABEL_COLUMN, help="Label column name.")
    p.add_argument("--out", required=True, help="Model JSON path.")
    p.add_argument("--trace", default=None, help="Trace CSV path (default: <out stem>.trace.csv).")
    p.add_argument("--method", choices=["adam", "coord_ascent"], default="adam", help="Optimizer.")
    p.add_argument("--epochs", type=int, default=1000, help="Passes over the training data.")
    p.add_argument("--lr", type=float, default=5e-4, help="Adam learning rate.")
    p.add_argument("--rho", type=float, default=0.5, help="Coordinate-ascent step size.")
    p.add_argument("--rho-decay", type=float, default=0.0, help="Step size decays as rho*(1+t)^-decay.")
    p.add_argument("--inducing", type=int, default=64, help="Number of inducing points.")
    p.add_argument("--batch-size", type=int, default=0, help="Minibatch size; 0 = full batch.")
    p.add_argument("--alpha-update", choices=["closed_form", "gradient"], default="closed_form", help="How the per-point GIG parameters are updated.")
    p.add_argument("--hyperopt-every", type=int, default=0, help="Refine kernel and inducing inputs every k epochs; 0 = frozen.")
    p.add_argument("--hyper-lr", type=float, default=1e-3, help="Step size of the hyperparameter refinement.")
    p.add_argument("--ard", action="store_true", help="One lengthscale per input dimension.")
    p.add_argument("--jitter", type=float, default=KernelHyperparams().jitter, help="Diagonal jitter added to K_PP.")
    p.add_argument("--record-timings", action="store_true", help="Write real per-epoch seconds into the trace CSV.")
    _common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="Predict classes and uncertainty for a CSV file.", formatter_class=fmt)
    p.add_argument("--model", required=True, help="Model JSON written by train.")
    p.add_argument("--data", required=True, help="CSV with the model's feature columns.")
    p.add_argument("--out", default="predictions.csv", help="Predictions CSV path.")
    p.add_argument("--label", default=DEFAULT_LABEL_COLUMN, help="Label column; accuracy is reported when present.")
    p.add_argument("--samples", type=int, default=DEFAULT_VR_SAMPLES, help="Monte-Carlo samples for the variation ratio.")
    _common(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("active-learn", help="Simulate pool-based active learning.", formatter_class=fmt)
    p.add_argument("--data", default=None, help="CSV to split into pool and test; synthetic blobs when omitted.")
    p.add_argument("--label", default=DEFAULT_LABEL_COLUMN, help="Label column name.")
    p.add_argument("--test-fraction", type=float, default=0.375, help="Share of --data held out as the test set.")
    p.add_argument("--n-pool", type=int, default=1000, help="Synthetic pool size.")
    p.add_argument("--n-test", type=int, default=600, help="Synthetic test set size.")
    p.add_argument("--classes", type=int, default=3, help="Number of classes.")
    p.add_argument("--dims", type=int, default=2, help="Input dimensions.")
    p.add_argument("--separation", type=float, default=3.0, help="Distance between class centres.")
    p.add_argument("--policy", choices=["variation_ratio", "mean_entropy", "both"], default="variation_ratio", help="Query policy.")
    p.add_argument("--budget", type=int, default=100, help="Queries per seed.")
    p.add_argument("--inducing", type=int, default=4, help="Number of inducing points.")
    p.add_argument("--retrain-epochs", type=int, default=200, help="Adam epochs per retraining.")
    p.add_argument("--lr", type=float, default=5e-4, help="Adam learning rate.")
    p.add_argument("--jitter", type=float, default=KernelHyperparams().jitter, help="Diagonal jitter added to K_PP.")
    p.add_argument("--samples", type=int, default=DEFAULT_VR_SAMPLES, help="Monte-Carlo samples for the variation ratio.")
    p.add_argument("--n-seeds", type=int, default=1, help="Seeds run are seed, seed+1, ...")
    p.add_argument("--threads", type=int, default=settings.default_threads(), help="Worker threads across seeds.")
    p.add_argument("--out-dir", default="al_out", help="Directory for traces and aggregates.")
    _common(p)
    p.set_defaults(handler=cmd_active_learn)

    p = sub.add_parser("rank", help="Average ranks from a dataset,method,accuracy table.", formatter_class=fmt)
    p.add_argument("--table", required=True, help="Long CSV with dataset,method,accuracy columns.")
    p.add_argument("--out", default="ranks.csv", help="Rank report CSV path.")
    _common(p, seed=False)
    p.set_defaults(handler=cmd_rank, seed=None)

    p = sub.add_parser("gradcheck", help="Check analytic gradients against finite differences.", formatter_class=fmt)
    p.add_argument("--points", type=int, default=20, help="Training points in the random instance.")
    p.add_argument("--classes", type=int, default=3, help="Number of classes.")
    p.add_argument("--inducing", type=int, default=5, help="Number of inducing points.")
    p.add_argument("--dims", type=int, default=2, help="Input dimensions.")
    p.add_argument("--perturb-analytic", type=float, default=0.0, help="Add this offset to every analytic gradient entry.")
    p.add_argument("--out", default=None, help="Also write the report here.")
    _common(p)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("synth", help="Write a synthetic Gaussian-blob dataset.", formatter_class=fmt)
    p.add_argument("--n", type=int, default=300, help="Number of points.")
    p.add_argument("--classes", type=int, default=3, help="Number of classes.")
    p.add_argument("--dims", type=int, default=2, help="Input dimensions.")
    p.add_argument("--separation", type=float, default=6.0, help="Distance between class centres.")
    p.add_argument("--label", default=DEFAULT_LABEL_COLUMN, help="Label column name.")
    p.add_argument("--out", required=True, help="Output CSV path.")
    _common(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("runs", help="List recorded runs from the ledger.", formatter_class=fmt)
    p.add_argument("--limit", type=int, default=20, help="Most recent runs to show.")
    p.add_argument("--command", dest="command_filter", default="", help="Only runs of this subcommand.")
    _common(p, seed=False)
    p.set_defaults(handler=cmd_runs, seed=None)
    return parser


def configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("bsvm")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else settings.log_level())


def _ledger(args: argparse.Namespace) -> None:
    directory = args.ledger or settings.data_dir()
    if directory is None:
        return
    try:
        storage_runs.set_engine(storage_db.configure(directory))
    except Exception as exc:
        logger.warning("run ledger unavailable at %s: %s", directory, exc)
        storage_runs.set_engine(None)


def _config_snapshot(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "handler"}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    _ledger(args)

    started = utc_now()
    t0 = time.perf_counter()
    result: Optional[CommandResult] = None
    try:
        result = args.handler(args)
        code = result.exit_code
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INGESTION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        if exc.epoch is not None:
            logger.error("aborted at epoch %d; last parameters: %s", exc.epoch, sorted(exc.snapshot))
        code = EXIT_NUMERICAL
    except (ConfigurationError, DomainError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG

    result = result or CommandResult(exit_code=code)
    result.timings["total"] = time.perf_counter() - t0
    manifest = RunManifest(
        command=args.command,
        version=__version__,
        config={"flags": _config_snapshot(args), **result.config},
        seed=args.seed,
        timings=result.timings,
        metrics=result.metrics,
        outputs=[str(p) for p in result.outputs],
        started_at=started,
        finished_at=utc_now(),
        exit_code=code,
    )
    if result.manifest_path is not None:
        write_manifest(manifest, result.manifest_path)
    if args.command != "runs":
        storage_runs.record_run(manifest)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
