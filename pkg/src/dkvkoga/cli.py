"""Command-line entry point: ``dkvkoga <subcommand> --config f.json --out dir``.

Every subcommand writes its files under ``--out`` and prints one JSON line
summarizing what it did.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import DkvkogaError, SchemaError
from .greedy import fit_greedy_detailed
from .harness import ExperimentConfig
from .training import LossHistory, TrainConfig, train_deep_kernel

SUBCOMMANDS = ("gen-data", "train", "greedy", "evaluate", "cv", "experiment", "export")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dkvkoga", description="Greedy deep-kernel surrogates.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="experiment config JSON (defaults if omitted)")
        s.add_argument("--out", type=Path, required=True, help="output directory")
        s.add_argument("--seed", type=int, help="overrides both data and training seeds")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, value parsed as JSON when possible")
        if name in ("greedy",):
            s.add_argument("--kernel", type=Path, help="kernel.json from `train` (default: <out>/kernel.json)")
        if name == "evaluate":
            s.add_argument("--model", type=Path, action="append",
                           help="model file(s); defaults to the ones in --out")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = dict(harness.parse_override(o) for o in args.override)
    if args.seed is not None:
        overrides.setdefault("seed", args.seed)
        overrides.setdefault("train.seed", args.seed)
    return cfg.with_overrides(overrides) if overrides else cfg


def _model_names(n: int) -> list[str]:
    return ["model.json"] if n == 1 else [f"model_eq{j + 1}.json" for j in range(n)]


def _suffix(j: int, n: int) -> str:
    return "" if n == 1 else f"_eq{j + 1}"


def cmd_gen_data(cfg, args) -> dict:
    data = harness.make_data(cfg)
    n = len(data.train)
    files = []
    for j, (tr, te) in enumerate(zip(data.train, data.test)):
        for split, ds in (("train", tr), ("test", te)):
            name = f"{split}{_suffix(j, n)}.csv"
            ds.save(args.out / name)
            files.append(name)
    return {"n_train": len(data.train[0]), "n_test": len(data.test[0]), "d_in": data.train[0].d_in,
            "d_out": data.train[0].d_out, "files": files}


def cmd_train(cfg, args) -> dict:
    data = harness.make_data(cfg)
    n = len(data.train)
    kernels, losses = [], []
    for j, ds in enumerate(data.train):
        tc = TrainConfig(**{**cfg.train.to_dict(), "batch_size": min(cfg.train.batch_size, len(ds))})
        if cfg.architecture.n_layers == 1:
            kernel = harness.ScalarKernelSpec.from_dict(cfg.architecture.outer)
            history = LossHistory()
        else:
            arch = cfg.architecture.build(ds.d_in, ds.d_out, len(ds))
            params, history = train_deep_kernel(ds, arch, tc)
            kernel = harness.DeepKernel(arch, params)
        kernels.append(harness.kernel_to_dict(kernel))
        (args.out / f"loss{_suffix(j, n)}.csv").write_text(history.to_csv())
        losses.append(history.epoch_losses[-1] if len(history) else None)
    doc = {"format_version": harness.FORMAT_VERSION, "kernels": kernels}
    (args.out / "kernel.json").write_text(json.dumps(doc))
    return {"kernels": len(kernels), "final_loss": losses}


def _load_kernels(path: Path) -> list:
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read kernel file {path}: {exc}") from exc
    if doc.get("format_version") != harness.FORMAT_VERSION:
        raise harness.VersionMismatch(f"kernel file format_version {doc.get('format_version')!r}")
    return [harness.kernel_from_dict(k) for k in doc["kernels"]]


def cmd_greedy(cfg, args) -> dict:
    data = harness.make_data(cfg)
    n = len(data.train)
    kpath = args.kernel or args.out / "kernel.json"
    if kpath.exists():
        kernels = _load_kernels(kpath)
        if len(kernels) != n:
            raise SchemaError(f"{kpath} holds {len(kernels)} kernels, problem needs {n}")
        fits = [fit_greedy_detailed(k, ds.X, ds.Y, cfg.greedy) for k, ds in zip(kernels, data.train)]
        models = [f.model for f in fits]
        histories = [f.residual_history for f in fits]
    else:
        outs = [harness.fit_surrogate(cfg, ds) for ds in data.train]
        models = [o.model for o in outs]
        histories = [o.residual_history for o in outs]
    for j, (m, h) in enumerate(zip(models, histories)):
        harness.save_model(m, args.out / _model_names(n)[j])
        (args.out / f"residuals{_suffix(j, n)}.csv").write_text(
            harness.history_csv(("iteration", "max_residual"), h))
    return {"n_centers": [m.n_centers for m in models], "kernel_file": str(kpath) if kpath.exists() else None}


def _evaluate(cfg, models, data) -> dict:
    if data.ode is not None:
        per = harness.pode_per_sample_errors(models, data.ode["mu_test"], data.ode["U_test"],
                                             data.ode["mode"], data.ode["grid"]).mean(axis=1)
    else:
        per = harness.per_sample_relative_errors(models[0], data.test[0])
    return {"e_rel": float(np.mean(per)), "e_rel_p10": float(np.percentile(per, 10)),
            "e_rel_p90": float(np.percentile(per, 90))}


def cmd_evaluate(cfg, args) -> dict:
    data = harness.make_data(cfg)
    paths = args.model or [args.out / name for name in _model_names(len(data.train))]
    models = [harness.load_model(p) for p in paths]
    metrics = _evaluate(cfg, models, data)
    (args.out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    return metrics


def cmd_cv(cfg, args) -> dict:
    best, scores = harness.cross_validate(cfg)
    (args.out / "cv.json").write_text(json.dumps({"selected": best, "scores": scores}, indent=2))
    (args.out / "config.json").write_text(json.dumps(cfg.with_overrides(best).to_dict(), indent=2))
    return {"selected": best, "best_score": min(s["score"] for s in scores)}


def cmd_experiment(cfg, args) -> dict:
    rec = harness.run_experiment(cfg, args.out)
    return {"problem": rec.problem, "e_rel": rec.e_rel, "e_rel_p10": rec.e_rel_p10,
            "e_rel_p90": rec.e_rel_p90, "n_centers": rec.n_centers,
            "t_offline": rec.t_offline, "t_online": rec.t_online}


def cmd_export(cfg, args) -> dict:
    """Resolved config plus the config and model-file JSON schemas."""
    files = {
        "config.json": cfg.to_dict(),
        "config.schema.json": harness.CONFIG_SCHEMA,
        "model.schema.json": harness.MODEL_SCHEMA,
    }
    for name, doc in files.items():
        (args.out / name).write_text(json.dumps(doc, indent=2) + "\n")
    return {"files": sorted(files)}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "greedy": cmd_greedy,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
    "experiment": cmd_experiment,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command != "experiment":  # run_experiment manages its own directory
            args.out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, args)
    except (DkvkogaError, ValueError, OSError) as exc:
        print(json.dumps({"command": args.command, "status": "error", "error": type(exc).__name__,
                          "message": str(exc)}))
        return 2
    print(json.dumps({"command": args.command, "status": "ok", **summary}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
