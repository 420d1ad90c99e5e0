"""End-to-end search runs.

evolve() iterates propose -> fit -> evaluate -> insert -> critique for a
fixed number of generations, keeps the top-K population, and evaluates
the best-by-validation candidate once on the test split.  zero_shot and
zero_optim are the single-proposal ablations.  run_experiment repeats a
method over seeds (regenerating the datasets per seed) and aggregates the
test metric as mean with a 95% Student-t half-width.

Each run can write a plain-text archive: the canonical spec, parameter
table, metrics, and loss curves per inserted generation, the full
request/reply transcript (replayable through ScriptedClient), and a
per-generation report.  Archives contain no wall-clock data, so two runs
with the same seed and replay file are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from hdtwin.agents import (
    DEFAULT_OBJECTIVE,
    DecodingConfig,
    Feedback,
    ModelingContext,
    Population,
    PopulationEntry,
    ProposalFailure,
    _extract_reply_fields,
    check_proposal,
    critique,
    population_insert,
    propose,
    record_generation,
)
from hdtwin.dsl import ModelSpec, SystemSchema, canonicalize, dsl_skeleton
from hdtwin.engine import (
    Dataset,
    EvaluationFault,
    ParamVector,
    init_params,
    one_step_mse,
    per_component_mse,
    rollout_mse,
    save_params,
)
from hdtwin.optim import FitResult, OptimConfig, fit
from hdtwin.systems import GenConfig, SystemDef, builtin_system, generate_dataset, system_description

log = logging.getLogger(__name__)


class RunFailure(Exception):
    """No generation produced a usable candidate."""

    def __init__(self, message: str, transcript: list[dict]):
        self.transcript = transcript
        super().__init__(message)


@dataclass
class EvolveConfig:
    generations: int = 20
    capacity: int = 16
    optim: OptimConfig = field(default_factory=OptimConfig)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    seed: int = 0
    test_metric: str = "one-step"  # headline metric; "rollout" also archived

    def __post_init__(self):
        if self.generations < 1 or self.capacity < 1:
            raise ValueError("generations and capacity must be >= 1")
        if self.test_metric not in ("one-step", "rollout"):
            raise ValueError("test_metric is 'one-step' or 'rollout'")


@dataclass
class GenerationRecord:
    generation: int
    status: str  # inserted | duplicate | proposal-failed | fit-faulted
    upsilon: float | None = None
    best_upsilon: float | None = None
    fingerprint: int | None = None
    description: str = ""


@dataclass
class TestMetrics:
    upsilon: float           # mean over components of the one-step MSE
    delta: np.ndarray        # per-component one-step MSE
    sum_mse: float           # summed-over-components one-step MSE
    rollout: float           # full-trajectory MSE

    def headline(self, mode: str) -> float:
        return self.rollout if mode == "rollout" else self.upsilon


@dataclass
class RunResult:
    best: PopulationEntry
    population: Population
    best_curve: list[float]
    records: list[GenerationRecord]
    test: TestMetrics
    transcript: list[dict]
    fit_results: dict[int, FitResult] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)


def make_modeling_context(system: SystemDef, generations: int,
                          n_trajectories: int | None = None) -> ModelingContext:
    """Assemble the structured prompt for one of the built-in systems."""
    target = "1e-10" if system.family == "seir" else "1e-6"
    requirements = (
        f"* The specification generated should achieve the lowest possible validation loss,"
        f" of {target} or less.\n"
        "* The specification generated should be interpretable, and fit the dataset as"
        " accurately as possible."
    )
    return ModelingContext(
        system_description=system_description(system, n_trajectories),
        objective=DEFAULT_OBJECTIVE,
        requirements=requirements,
        skeleton=dsl_skeleton(system.schema),
        generations=generations,
    )


def evaluate_test_metrics(spec: ModelSpec, params: ParamVector, test: Dataset) -> TestMetrics:
    delta, ups = per_component_mse(spec, params, test)
    return TestMetrics(
        upsilon=ups,
        delta=delta,
        sum_mse=one_step_mse(spec, params, test),
        rollout=rollout_mse(spec, params, test),
    )


def _mix_seed(seed: int, generation: int) -> int:
    return (seed * 1_000_003 + generation) % (2 ** 31)


def _read_human_feedback(directory, generation: int) -> str | None:
    if directory is None:
        return None
    path = Path(directory) / f"gen-{generation:03d}.txt"
    if path.exists():
        return path.read_text().strip()
    return None


def evolve(ctx: ModelingContext, system: SystemDef, datasets: dict[str, Dataset],
           cfg: EvolveConfig, client, human_feedback_dir=None) -> RunResult:
    """Run the full propose/fit/evaluate/insert/critique loop.

    Failed proposals and faulted fits consume their generation without an
    insertion.  The best-by-validation entry is evaluated once on test.
    """
    train, val, test = datasets["train"], datasets["val"], datasets["test"]
    pop = Population(capacity=cfg.capacity)
    feedback: Feedback | None = None
    records: list[GenerationRecord] = []
    best_curve: list[float] = []
    fit_results: dict[int, FitResult] = {}
    stages = {"propose": 0.0, "fit": 0.0, "evaluate": 0.0, "critique": 0.0}

    for g in range(1, cfg.generations + 1):
        human = _read_human_feedback(human_feedback_dir, g)
        fb = feedback
        if human:
            merged = (feedback.text + "\n" + human) if feedback and feedback.text else human
            fb = Feedback(merged, generation=g - 1)
        t0 = time.perf_counter()
        try:
            spec, description = propose(client, ctx, system.schema, pop, fb, g, cfg.decoding)
        except ProposalFailure as err:
            stages["propose"] += time.perf_counter() - t0
            log.warning("generation %d: proposal failed (%s)", g, err)
            records.append(GenerationRecord(g, "proposal-failed"))
        else:
            stages["propose"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            result = fit(spec, init_params(spec, seed=_mix_seed(cfg.seed, g)),
                         train, val, cfg.optim)
            stages["fit"] += time.perf_counter() - t0
            fit_results[g] = result
            if result.faulted or not np.isfinite(result.val_loss):
                log.warning("generation %d: fit faulted", g)
                records.append(GenerationRecord(g, "fit-faulted", description=description))
            else:
                canon = canonicalize(spec)
                entry = PopulationEntry(
                    spec=spec, canonical_text=canon.text, fingerprint=canon.fingerprint,
                    params=result.params, delta=result.component_losses,
                    upsilon=result.val_loss, generation=g, description=description,
                )
                known = {e.fingerprint for e in pop.entries}
                pop = population_insert(pop, entry)
                status = "duplicate" if entry.fingerprint in known else "inserted"
                records.append(GenerationRecord(
                    g, status, upsilon=entry.upsilon,
                    fingerprint=entry.fingerprint, description=description,
                ))
        best = pop.best()
        pop = record_generation(pop, g)
        records[-1].best_upsilon = best.upsilon if best else None
        best_curve.append(best.upsilon if best else float("inf"))
        if g < cfg.generations and len(pop) > 0:
            t0 = time.perf_counter()
            feedback = critique(client, ctx.requirements, pop, g + 1,
                                cfg.generations, cfg.decoding)
            stages["critique"] += time.perf_counter() - t0

    best = pop.best()
    if best is None:
        raise RunFailure("no generation produced a usable candidate",
                         list(getattr(client, "transcript", [])))
    t0 = time.perf_counter()
    test_metrics = evaluate_test_metrics(best.spec, best.params, test)
    stages["evaluate"] += time.perf_counter() - t0
    return RunResult(best, pop, best_curve, records, test_metrics,
                     list(getattr(client, "transcript", [])), fit_results, stages)


def _single_proposal(ctx, system, datasets, cfg, client, optimize: bool) -> RunResult:
    train, val, test = datasets["train"], datasets["val"], datasets["test"]
    try:
        spec, description = propose(client, ctx, system.schema, Population(capacity=cfg.capacity),
                                    None, 1, cfg.decoding)
    except ProposalFailure as err:
        raise RunFailure(f"proposal failed: {err}", list(getattr(client, "transcript", [])))
    params = init_params(spec, seed=_mix_seed(cfg.seed, 1))
    fit_results: dict[int, FitResult] = {}
    if optimize:
        result = fit(spec, params, train, val, cfg.optim)
        fit_results[1] = result
        if result.faulted or not np.isfinite(result.val_loss):
            raise RunFailure("fit faulted", list(getattr(client, "transcript", [])))
        params, delta, ups = result.params, result.component_losses, result.val_loss
    else:
        try:
            delta, ups = per_component_mse(spec, params, val)
        except EvaluationFault as fault:
            raise RunFailure(f"evaluation faulted: {fault}",
                             list(getattr(client, "transcript", [])))
    canon = canonicalize(spec)
    entry = PopulationEntry(spec, canon.text, canon.fingerprint, params,
                            np.asarray(delta), float(ups), 1, description)
    pop = record_generation(population_insert(Population(capacity=cfg.capacity), entry), 1)
    record = GenerationRecord(1, "inserted", entry.upsilon, entry.upsilon,
                              entry.fingerprint, description)
    test_metrics = evaluate_test_metrics(spec, params, test)
    return RunResult(entry, pop, [entry.upsilon], [record], test_metrics,
                     list(getattr(client, "transcript", [])), fit_results, {})


def zero_shot(ctx, system, datasets, cfg: EvolveConfig, client) -> RunResult:
    """Evaluate the first valid proposal with its suggested inits, unfitted."""
    return _single_proposal(ctx, system, datasets, cfg, client, optimize=False)


def zero_optim(ctx, system, datasets, cfg: EvolveConfig, client) -> RunResult:
    """zero_shot plus one parameter fit."""
    return _single_proposal(ctx, system, datasets, cfg, client, optimize=True)


def scale_param(entry: PopulationEntry, name: str, factor: float) -> PopulationEntry:
    """A copy of a fitted candidate with one scalar parameter scaled; its
    validation metrics are cleared pending re-evaluation."""
    if name not in entry.params.scalars:
        if name in entry.params.weights:
            raise KeyError(f"{name!r} is a network, only scalar parameters can be scaled")
        raise KeyError(f"unknown parameter {name!r}")
    params = entry.params.copy()
    params.scalars[name] *= factor
    return dataclasses.replace(entry, params=params, delta=None, upsilon=None)


_ADAPT_TEMPLATE = """You previously discovered and fitted the following model specification:```
{spec}
```
optimized_parameters = {params!r}

{instruction}

Modify the specification accordingly. Keep the same derivative line structure. Reply with a single RFC8259 compliant JSON object following this format without deviation:
{{"spec": "the complete modified specification text", "description": "a concise description of the change"}}"""


def adapt_model(client, entry: PopulationEntry, instruction: str, schema: SystemSchema,
                decoding: DecodingConfig) -> tuple[ModelSpec, str]:
    """Ask the modeling agent to adapt a fitted model to a described change
    (an intervention); the caller re-evaluates the returned spec."""
    inlined = dataclasses.replace(
        entry.spec,
        params=tuple(
            dataclasses.replace(p, init=float(entry.params.scalars[p.name]))
            for p in entry.spec.params
        ),
    )
    task = _ADAPT_TEMPLATE.format(
        spec=canonicalize(inlined).text,
        params={k: float(v) for k, v in entry.params.scalars.items()},
        instruction=instruction.strip(),
    )
    convo = [{"role": "user", "content": task}]
    problems: list[str] = []
    for _ in range(decoding.retries + 1):
        reply = client.complete(convo, decoding)
        try:
            spec_text, description = _extract_reply_fields(reply)
        except ValueError as err:
            problems = [str(err)]
            spec = None
        else:
            spec, problems = check_proposal(spec_text, schema)
        if spec is not None:
            return spec, description
        convo = convo + [
            {"role": "assistant", "content": reply},
            {"role": "user", "content": "Your previous reply could not be used:\n"
                + "\n".join(f"* {p}" for p in problems)
                + "\nReply again with a single corrected JSON object."},
        ]
    raise ProposalFailure(problems)


# ---------------------------------------------------------------------------
# Multi-seed experiments


def confidence_interval(values: list[float]) -> tuple[float, float | None]:
    """Mean and 95% two-sided Student-t half-width over seed outcomes;
    the half-width is None for a single value."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, None
    sem = float(arr.std(ddof=1)) / np.sqrt(len(arr))
    half = float(stats.t.ppf(0.975, len(arr) - 1) * sem)
    return mean, half


@dataclass
class SeedOutcome:
    seed: int
    metric: float | None = None
    error: str | None = None
    archive: str | None = None


@dataclass
class AggregateReport:
    system: str
    method: str
    metric_name: str
    outcomes: list[SeedOutcome]
    mean: float | None
    half_width: float | None


def run_experiment(system_id: str, method: str, seeds: list[int], *,
                   evolve_cfg: EvolveConfig | None = None,
                   gen_cfg: GenConfig | None = None,
                   sindy_cfg=None,
                   client_factory=None,
                   out_dir=None) -> AggregateReport:
    """Run one method over several seeds, re-sampling the datasets per seed,
    and aggregate the headline test metric.

    `method` is one of evolve | zero-shot | zero-optim | sindy |
    baseline:<id>.  Agent methods need `client_factory(seed) -> client`.
    Per-seed failures are recorded in the report, never silently dropped.
    """
    from hdtwin.baselines import SindyConfig, builtin_baseline_spec, sindy_fit, sindy_params

    if not seeds:
        raise ValueError("need at least one seed")
    agent_methods = ("evolve", "zero-shot", "zero-optim")
    if method not in agent_methods + ("sindy",) and not method.startswith("baseline:"):
        raise ValueError(f"unknown method {method!r}")
    if method in agent_methods and client_factory is None:
        raise ValueError(f"method {method!r} needs an LLM client")
    evolve_cfg = evolve_cfg or EvolveConfig()
    gen_cfg = gen_cfg or GenConfig()
    sindy_cfg = sindy_cfg or SindyConfig()
    system = builtin_system(system_id)
    outcomes: list[SeedOutcome] = []
    for seed in seeds:
        outcome = SeedOutcome(seed=seed)
        outcomes.append(outcome)
        seed_dir = Path(out_dir) / f"seed-{seed:04d}" if out_dir else None
        try:
            datasets = generate_dataset(system, dataclasses.replace(gen_cfg, seed=seed))
            cfg = dataclasses.replace(
                evolve_cfg, seed=seed,
                optim=dataclasses.replace(evolve_cfg.optim, seed=seed),
            )
            if method in agent_methods:
                client = client_factory(seed)
                ctx = make_modeling_context(system, cfg.generations, gen_cfg.n)
                runner = {"evolve": evolve, "zero-shot": zero_shot,
                          "zero-optim": zero_optim}[method]
                result = runner(ctx, system, datasets, cfg, client)
                outcome.metric = result.test.headline(cfg.test_metric)
                if seed_dir:
                    write_run_archive(seed_dir, result, system_id, method, seed, cfg)
                    outcome.archive = str(seed_dir)
            elif method == "sindy":
                res = sindy_fit(datasets["train"], sindy_cfg)
                metrics = evaluate_test_metrics(res.spec, sindy_params(res), datasets["test"])
                outcome.metric = metrics.headline(cfg.test_metric)
                if seed_dir:
                    _write_model_dir(seed_dir, res.spec, sindy_params(res), metrics, cfg)
                    outcome.archive = str(seed_dir)
            elif method.startswith("baseline:"):
                spec = builtin_baseline_spec(method.split(":", 1)[1], system.schema)
                result = fit(spec, init_params(spec, seed=seed),
                             datasets["train"], datasets["val"], cfg.optim)
                if result.faulted:
                    raise RunFailure("baseline fit faulted", [])
                metrics = evaluate_test_metrics(spec, result.params, datasets["test"])
                outcome.metric = metrics.headline(cfg.test_metric)
                if seed_dir:
                    _write_model_dir(seed_dir, spec, result.params, metrics, cfg)
                    outcome.archive = str(seed_dir)
        except (RunFailure, EvaluationFault, ValueError, KeyError) as err:
            log.warning("seed %d failed: %s", seed, err)
            outcome.error = str(err)
    values = [o.metric for o in outcomes if o.metric is not None]
    mean, half = confidence_interval(values) if values else (None, None)
    report = AggregateReport(system_id, method, evolve_cfg.test_metric, outcomes, mean, half)
    if out_dir:
        write_summary(Path(out_dir), report)
    return report


# ---------------------------------------------------------------------------
# Archives


def _json_dump(doc, path: Path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metrics_doc(metrics: TestMetrics) -> dict:
    return {
        "test_upsilon": metrics.upsilon,
        "test_delta": [float(v) for v in metrics.delta],
        "test_sum_mse": metrics.sum_mse,
        "test_rollout_mse": metrics.rollout,
    }


def write_run_archive(out_dir, result: RunResult, system_id: str, method: str,
                      seed: int, cfg: EvolveConfig):
    """Write the documented run-archive layout (no wall-clock anywhere)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _json_dump({
        "system": system_id,
        "method": method,
        "seed": seed,
        "generations": cfg.generations,
        "capacity": cfg.capacity,
        "test_metric": cfg.test_metric,
        "optim": dataclasses.asdict(cfg.optim),
        "decoding": dataclasses.asdict(cfg.decoding),
    }, out / "run.manifest")

    (out / "transcript").mkdir(exist_ok=True)
    _json_dump(result.transcript, out / "transcript" / "transcript.json")

    inserted = {r.generation: r for r in result.records if r.status == "inserted"}
    by_gen = {e.generation: e for e in result.population.entries}
    for g, record in inserted.items():
        entry = by_gen.get(g)
        if entry is None:
            continue  # inserted but later evicted; metrics stay in report.csv
        gen_dir = out / "population" / f"gen-{g:03d}"
        gen_dir.mkdir(parents=True, exist_ok=True)
        (gen_dir / "model.hdt").write_text(entry.canonical_text)
        save_params(entry.params, gen_dir / "params.json")
        _json_dump({
            "generation": g,
            "upsilon": entry.upsilon,
            "delta": [float(v) for v in entry.delta],
            "fingerprint": entry.fingerprint,
            "description": entry.description,
        }, gen_dir / "metrics.json")
        fit_result = result.fit_results.get(g)
        if fit_result is not None:
            with open(gen_dir / "curves.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["epoch", "train_loss", "val_loss"])
                w.writerow([0, "", repr(fit_result.val_curve[0])])
                for i, train_loss in enumerate(fit_result.train_curve, start=1):
                    w.writerow([i, repr(train_loss), repr(fit_result.val_curve[i])])

    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "status", "upsilon", "best_upsilon",
                    "fingerprint", "description"])
        for r in result.records:
            w.writerow([
                r.generation, r.status,
                "" if r.upsilon is None else repr(r.upsilon),
                "" if r.best_upsilon is None else repr(r.best_upsilon),
                "" if r.fingerprint is None else r.fingerprint,
                r.description,
            ])

    best = result.best
    doc = {
        "best_generation": best.generation,
        "best_upsilon": best.upsilon,
        "best_delta": [float(v) for v in best.delta],
        "best_fingerprint": best.fingerprint,
        "best_description": best.description,
        "headline_metric": cfg.test_metric,
        "headline_value": result.test.headline(cfg.test_metric),
    }
    doc.update(_metrics_doc(result.test))
    _json_dump(doc, out / "result.json")
    (out / "best-model.hdt").write_text(best.canonical_text)
    save_params(best.params, out / "best-params.json")


def _write_model_dir(out_dir, spec: ModelSpec, params: ParamVector,
                     metrics: TestMetrics, cfg: EvolveConfig):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best-model.hdt").write_text(canonicalize(spec).text)
    save_params(params, out / "best-params.json")
    doc = {"headline_metric": cfg.test_metric,
           "headline_value": metrics.headline(cfg.test_metric)}
    doc.update(_metrics_doc(metrics))
    _json_dump(doc, out / "result.json")


def write_summary(out_dir: Path, report: AggregateReport):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "metric", "error"])
        for o in report.outcomes:
            w.writerow([o.seed, "" if o.metric is None else repr(o.metric), o.error or ""])
        w.writerow([])
        w.writerow(["mean", "" if report.mean is None else repr(report.mean), ""])
        w.writerow(["half_width_95",
                    "" if report.half_width is None else repr(report.half_width), ""])


def load_result(run_dir) -> dict:
    with open(Path(run_dir) / "result.json") as fh:
        return json.load(fh)
