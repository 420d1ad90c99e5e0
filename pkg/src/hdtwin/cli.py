"""Command-line surface.

Subcommands: gen-data, fit, evolve, baseline, eval, report.  Every run
prints one machine-readable ``METRICS {...}`` JSON line on stdout and
writes only inside its --out directory.  Exit codes: 0 success, 2 config
error, 3 run failure, 4 transport failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from hdtwin.agents import DecodingConfig, HttpClient, ScriptedClient, TransportError
from hdtwin.baselines import BASELINE_IDS, SindyConfig
from hdtwin.dsl import DslError, parse_model_spec
from hdtwin.engine import (
    EvaluationFault,
    init_params,
    load_params,
    load_saved_dataset,
    save_dataset,
    save_params,
)
from hdtwin.optim import OptimConfig, fit
from hdtwin.orchestrator import (
    EvolveConfig,
    RunFailure,
    confidence_interval,
    evaluate_test_metrics,
    load_result,
    run_experiment,
)
from hdtwin.systems import BUILTIN_IDS, GenConfig, builtin_system, generate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_TRANSPORT = 4


class ConfigError(Exception):
    pass


def _metrics_line(doc: dict):
    print("METRICS " + json.dumps(doc, sort_keys=True))


def _optim_flags(parser: argparse.ArgumentParser):
    d = OptimConfig()
    parser.add_argument("--lr", type=float, default=d.lr, help="Adam learning rate")
    parser.add_argument("--batch-size", type=int, default=d.batch_size,
                        help="transitions per mini-batch")
    parser.add_argument("--max-epochs", type=int, default=d.max_epochs,
                        help="training epoch budget")
    parser.add_argument("--patience", type=int, default=d.patience,
                        help="epochs without validation improvement before stopping")
    parser.add_argument("--seed", type=int, default=d.seed, help="shuffling seed")


def _optim_from_args(args) -> OptimConfig:
    return OptimConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
                       patience=args.patience, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdtwin",
        description="Hybrid digital-twin engine: data generation, model fitting,"
                    " evolutionary search, baselines, evaluation, and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", formatter_class=fmt,
                       help="generate train/val/test datasets for a built-in system")
    p.add_argument("--system", required=True, choices=BUILTIN_IDS)
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.add_argument("--n", type=int, default=None,
                   help="trajectories per split (default: the system's own)")
    p.add_argument("--ood", action="store_true",
                   help="disjoint train/test initial-volume supports at dt = 1/24")
    p.add_argument("--intervention", action="store_true",
                   help="scale the transmission rate on the test split")
    p.add_argument("--intervention-day", type=float, default=19.0,
                   help="day the transmission change takes effect")
    p.add_argument("--intervention-scale", type=float, default=0.25,
                   help="multiplier applied to the transmission rate")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", formatter_class=fmt,
                       help="fit one spec file to a generated dataset directory")
    p.add_argument("--spec", required=True, help="path to a .hdt model spec")
    p.add_argument("--data", required=True,
                   help="dataset directory holding train/ val/ (and optionally test/)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mlp-seed", type=int, default=0, help="network weight init seed")
    _optim_flags(p)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="evaluate a spec + parameter table on a dataset directory")
    p.add_argument("--spec", required=True, help="path to a .hdt model spec")
    p.add_argument("--params", required=True, help="params.json as written by fit")
    p.add_argument("--data", required=True, help="one dataset split directory")

    p = sub.add_parser("evolve", formatter_class=fmt,
                       help="run an evolution (or ablation) experiment from a config file")
    p.add_argument("--config", required=True, help="JSON run-config file")

    p = sub.add_parser("baseline", formatter_class=fmt,
                       help="run a non-agentic baseline over seeds")
    p.add_argument("--id", required=True, dest="baseline_id",
                   help=f"sindy or one of: {', '.join(BASELINE_IDS)}")
    p.add_argument("--system", required=True, choices=BUILTIN_IDS)
    p.add_argument("--seeds", type=int, nargs="+", default=[0], help="run seeds")
    p.add_argument("--n", type=int, default=None, help="trajectories per split")
    p.add_argument("--out", default=None, help="optional archive directory")
    p.add_argument("--test-metric", choices=("one-step", "rollout"), default="one-step",
                   help="headline test metric")
    p.add_argument("--degree", type=int, default=SindyConfig().degree,
                   help="sparse-regression polynomial degree")
    p.add_argument("--alpha", type=float, default=SindyConfig().alpha,
                   help="sparse-regression ridge strength")
    p.add_argument("--threshold", type=float, default=SindyConfig().threshold,
                   help="sparse-regression pruning threshold")
    _optim_flags(p)

    p = sub.add_parser("report", formatter_class=fmt,
                       help="aggregate run archives into one summary")
    p.add_argument("--runs", nargs="+", required=True, help="run archive directories")
    p.add_argument("--out", default=None, help="optional CSV to write")

    return parser


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_data(args) -> int:
    system = builtin_system(args.system)
    cfg = GenConfig(n=args.n, seed=args.seed, ood=args.ood, intervention=args.intervention,
                    intervention_day=args.intervention_day,
                    intervention_scale=args.intervention_scale)
    datasets = generate_dataset(system, cfg)
    out = Path(args.out)
    for name, ds in datasets.items():
        save_dataset(ds, out / name, seed=args.seed,
                     notes={"system": args.system, "mode": name})
    _metrics_line({"command": "gen-data", "system": args.system, "seed": args.seed,
                   "splits": sorted(datasets),
                   "trajectories_per_split": len(datasets["train"].trajectories)})
    return EXIT_OK


def cmd_fit(args) -> int:
    spec = parse_model_spec(Path(args.spec).read_text())
    data_dir = Path(args.data)
    train = load_saved_dataset(data_dir / "train")
    val = load_saved_dataset(data_dir / "val")
    result = fit(spec, init_params(spec, seed=args.mlp_seed), train, val,
                 _optim_from_args(args))
    if result.faulted and not (result.val_loss < float("inf")):
        raise RunFailure("fit faulted before any finite epoch", [])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from hdtwin.dsl import canonicalize

    (out / "best-model.hdt").write_text(canonicalize(spec).text)
    save_params(result.params, out / "best-params.json")
    doc = {
        "command": "fit",
        "val_upsilon": result.val_loss,
        "val_delta": [float(v) for v in result.component_losses],
        "epochs_run": result.epochs_run,
        "faulted": result.faulted,
    }
    if (data_dir / "test").exists():
        metrics = evaluate_test_metrics(spec, result.params, load_saved_dataset(data_dir / "test"))
        doc.update({"test_upsilon": metrics.upsilon, "test_rollout_mse": metrics.rollout})
    with open(out / "result.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _metrics_line(doc)
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = parse_model_spec(Path(args.spec).read_text())
    params = load_params(args.params)
    ds = load_saved_dataset(args.data)
    metrics = evaluate_test_metrics(spec, params, ds)
    print(f"upsilon (mean over components): {metrics.upsilon!r}")
    for name, value in zip((c.target for c in spec.components), metrics.delta):
        print(f"delta[{name}]: {float(value)!r}")
    print(f"rollout mse: {metrics.rollout!r}")
    _metrics_line({"command": "eval", "upsilon": metrics.upsilon,
                   "delta": [float(v) for v in metrics.delta],
                   "sum_mse": metrics.sum_mse, "rollout_mse": metrics.rollout})
    return EXIT_OK


def _load_run_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    known = {"system", "method", "seeds", "out", "client", "evolve", "optim", "gen", "sindy"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("system", "method", "seeds"):
        if key not in doc:
            raise ConfigError(f"config is missing {key!r}")
    return doc


def _build_sub_config(cls, doc: dict, section: str):
    body = doc.get(section, {})
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(body) - fields
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**body)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad {section} config: {err}")


def _client_factory_from_config(doc: dict):
    client_doc = doc.get("client", {})
    mode = client_doc.get("mode", "replay")
    if mode == "replay":
        path = client_doc.get("path")
        if not path or not Path(path).exists():
            raise ConfigError(f"replay client needs an existing 'path' (got {path!r})")
        return lambda seed: ScriptedClient.from_file(path)
    if mode == "http":
        base_url = client_doc.get("base_url")
        if not base_url:
            raise ConfigError("http client needs 'base_url'")
        return lambda seed: HttpClient(base_url)
    raise ConfigError(f"unknown client mode {mode!r} (use replay or http)")


def cmd_evolve(args) -> int:
    doc = _load_run_config(args.config)
    method = doc["method"]
    evolve_cfg = _build_sub_config(EvolveConfig, doc, "evolve")
    if "optim" in doc:
        evolve_cfg = dataclasses.replace(
            evolve_cfg, optim=_build_sub_config(OptimConfig, doc, "optim"))
    if "client" in doc:
        decode_body = {k: v for k, v in doc["client"].items()
                       if k in {f.name for f in dataclasses.fields(DecodingConfig)}}
        evolve_cfg = dataclasses.replace(evolve_cfg, decoding=DecodingConfig(**decode_body))
    gen_cfg = _build_sub_config(GenConfig, doc, "gen")
    sindy_cfg = _build_sub_config(SindyConfig, doc, "sindy")
    factory = None
    if method in ("evolve", "zero-shot", "zero-optim"):
        factory = _client_factory_from_config(doc)
    try:
        report = run_experiment(
            doc["system"], method, list(doc["seeds"]), evolve_cfg=evolve_cfg,
            gen_cfg=gen_cfg, sindy_cfg=sindy_cfg, client_factory=factory,
            out_dir=doc.get("out"),
        )
    except (ValueError, KeyError) as err:
        raise ConfigError(str(err))
    return _finish_experiment(report)


def cmd_baseline(args) -> int:
    method = "sindy" if args.baseline_id == "sindy" else f"baseline:{args.baseline_id}"
    evolve_cfg = EvolveConfig(optim=_optim_from_args(args), test_metric=args.test_metric)
    sindy_cfg = SindyConfig(degree=args.degree, alpha=args.alpha, threshold=args.threshold)
    report = run_experiment(args.system, method, args.seeds, evolve_cfg=evolve_cfg,
                            gen_cfg=GenConfig(n=args.n), sindy_cfg=sindy_cfg,
                            out_dir=args.out)
    return _finish_experiment(report)


def _finish_experiment(report) -> int:
    doc = {
        "command": report.method,
        "system": report.system,
        "metric": report.metric_name,
        "per_seed": {str(o.seed): o.metric for o in report.outcomes},
        "errors": {str(o.seed): o.error for o in report.outcomes if o.error},
        "mean": report.mean,
        "half_width_95": report.half_width,
    }
    _metrics_line(doc)
    if report.mean is None:
        raise RunFailure("every seed failed", [])
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.runs:
        path = Path(run_dir)
        if not (path / "result.json").exists():
            raise ConfigError(f"{run_dir} has no result.json")
        doc = load_result(path)
        rows.append((str(path), doc.get("headline_metric", "one-step"),
                     float(doc["headline_value"])))
    values = [v for _, _, v in rows]
    mean, half = confidence_interval(values)
    if args.out:
        import csv as _csv

        with open(args.out, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["run", "metric", "value"])
            for row in rows:
                w.writerow(row)
            w.writerow([])
            w.writerow(["mean", "", repr(mean)])
            w.writerow(["half_width_95", "", "" if half is None else repr(half)])
    _metrics_line({"command": "report", "runs": len(rows), "mean": mean,
                   "half_width_95": half})
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "evolve": cmd_evolve,
    "baseline": cmd_baseline,
    "report": cmd_report,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, KeyError, DslError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunFailure, EvaluationFault) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUN
    except TransportError as err:
        print(f"transport failure: {err}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
