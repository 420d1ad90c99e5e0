"""The modeling and evaluation agents.

The modeling agent is prompted with a system description, a fill-in
skeleton, the current top-K fitted specs with their losses and optimized
parameter values, and the evaluation agent's latest feedback; it must
reply with one JSON object carrying the new spec text and a short
description.  The evaluation agent sees the same population plus the
history of per-iteration bests and replies with free-form feedback.

Transport is pluggable: HttpClient posts chat-completion requests to a
configurable endpoint (API key from HDTWIN_LLM_API_KEY); ScriptedClient
replays canned replies from a file, which makes whole evolution runs
reproducible and testable offline.  Both record every request/reply pair.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, replace

import numpy as np
import requests

from hdtwin.dsl import DslError, ModelSpec, SystemSchema, parse_model_spec, validate
from hdtwin.engine import ParamVector
from hdtwin.optim import PARAM_COUNT_CAP

REPLY_FIELD_SPEC = "spec"
REPLY_FIELD_DESCRIPTION = "description"


class TransportError(Exception):
    """The LLM endpoint could not produce a reply."""


class ReplayExhausted(TransportError):
    """The scripted client ran out of canned replies."""


class ProposalFailure(Exception):
    """No valid spec could be parsed from the modeling agent's replies."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems) or "no valid proposal")


@dataclass(frozen=True)
class ModelingContext:
    """The structured prompt: what system to model and under what rules."""

    system_description: str
    objective: str
    requirements: str
    skeleton: str
    generations: int

    def __post_init__(self):
        for name in ("system_description", "objective", "requirements", "skeleton"):
            if not getattr(self, name).strip():
                raise ValueError(f"modeling context field {name} is empty")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass(frozen=True)
class PopulationEntry:
    spec: ModelSpec
    canonical_text: str
    fingerprint: int
    params: ParamVector
    delta: np.ndarray          # per-component validation MSE
    upsilon: float             # mean validation MSE
    generation: int
    description: str = ""


@dataclass(frozen=True)
class Population:
    """Top-K candidates sorted by ascending validation loss."""

    entries: tuple[PopulationEntry, ...] = ()
    capacity: int = 16
    # (generation, best upsilon so far, description of that best entry)
    history: tuple[tuple[int, float, str], ...] = ()

    def best(self) -> PopulationEntry | None:
        return self.entries[0] if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Feedback:
    text: str
    generation: int
    warning: bool = False


@dataclass
class DecodingConfig:
    model: str = "gpt-4-1106-preview"
    temperature: float = 0.7
    max_tokens: int = 4096
    timeout: float = 120.0
    retries: int = 3
    retry_wait: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def population_insert(pop: Population, entry: PopulationEntry) -> Population:
    """Insert unless the structural fingerprint is already present, keep
    ascending validation-loss order, truncate to capacity."""
    if not np.isfinite(entry.upsilon):
        raise ValueError("faulted candidates (non-finite loss) are never inserted")
    if any(e.fingerprint == entry.fingerprint for e in pop.entries):
        return pop
    entries = sorted(pop.entries + (entry,), key=lambda e: e.upsilon)
    return replace(pop, entries=tuple(entries[: pop.capacity]))


def record_generation(pop: Population, generation: int) -> Population:
    """Append this generation's best-so-far line to the history."""
    best = pop.best()
    if best is None:
        return pop
    line = (generation, best.upsilon, best.description)
    return replace(pop, history=pop.history + (line,))


# ---------------------------------------------------------------------------
# Prompt rendering

SYSTEM_PROMPT = """Objective: Write a model specification to create an effective differential equation simulator for a given task.
Please note that the specification should be fully functional. No placeholders.

You must act autonomously and you will receive no human input at any stage. You have to return as output the complete specification for this task, and correctly improve the specification to create the most accurate and realistic simulator possible.
You always write out the full specification contents.
You cannot visualize any graphical output. You exist within a machine. The specification can include black box multi-layer perceptrons where required.

When replying only provide a single RFC8259 compliant JSON object following this format without deviation:
{"spec": "the complete model specification text", "description": "a concise description of the model, indicating if it is a white box only or white and black box model"}"""

DEFAULT_OBJECTIVE = """* The parameters of the model will be optimized to an observed training dataset with the given simulator.
* The observed training dataset has very few samples, and the model must be able to generalize to unseen data."""

DEFAULT_REQUIREMENTS = """* The specification generated should achieve the lowest possible validation loss, of 1e-6 or less.
* The specification generated should be interpretable, and fit the dataset as accurately as possible."""

_USEFUL_TO_KNOW = """* You are a specification evolving machine, and you will be called {generations} times to generate a specification, and improve it to achieve the lowest possible validation loss.
* The model defines the state differential and will be used with an ODE solver to fit the observed training dataset.
* You can use any parameters you want and any black box neural network components (multi-layer perceptrons); however, you have to declare these.
* It is preferable to decompose the system into differential equations (compartments) if possible.
* You can use any unary functions, for example log, exp, power etc.
* Under no circumstance can you change the skeleton derivative lines, only fill them in.
* Use initially white box models first and then switch to hybrid white and black box models for the residuals, only after no further best program iteration improvement with white box models.
* Make sure your specification follows the exact skeleton format."""

_FIRST_TASK = """You will get a system description to code a differential equation simulator for.

System Description:```
{system_description}
```

Modelling goals:```
{objective}
```

Requirement Specification:```
{requirements}
```

Skeleton specification to fill in:```
{skeleton}
```

Useful to know:```
{useful}
```

Think step-by-step, and then give the complete full working specification. You are generating a specification for iteration {generation} out of {generations}."""

_REGENERATE = """Here are the top specification completions so far that you have generated, sorted for the lowest validation loss last:```
{completions}
```

Feedback on how to improve the specification:```
{feedback}
```

Please now regenerate the specification, with the aim to improve it to achieve a lower validation error. Use the feedback where applicable. You are generating a specification for iteration {generation} out of {generations} total iterations. When generating the specification if you are unsure about something, take your best guess. You have to generate a specification, and cannot give an empty string answer.

Please always only fill in the following skeleton:```
{skeleton}
```
You cannot change the derivative lines, or input variables."""

_REFLECTION = """You generated the following specification completions, which then had their parameters optimized to the training dataset. Please reflect on how you can improve the specification to minimize the validation loss to 1e-6 or less. The specification examples are delineated by ###.

Here are your previous iterations the best specifications generated. Use it to see if you have exhausted white box models, i.e. when a white box model repeats with the same val loss and then only add black box models to the white box models:```
{history}
```

Here are the top specification completions so far that you have generated, sorted for the lowest validation loss last:```
{completions}
```

Please reflect on how you can improve the specification to fit the dataset as accurately as possible, and be interpretable. Think step-by-step. Provide only actionable feedback, that has direct changes to the specification. Do not write out the specification, only describe how it can be improved. Where applicable use the values of the optimized parameters to reason how the specification can be improved to fit the dataset as accurately as possible. This is for generating a new specification for the next iteration {generation} out of {generations}."""


def _g3(v: float) -> str:
    return f"{v:.3g}"


def format_population_entry(entry: PopulationEntry) -> str:
    names = [c.target for c in entry.spec.components]
    dims = ", ".join(f"{n} val loss: {_g3(d)}" for n, d in zip(names, entry.delta))
    scalars = {k: float(v) for k, v in entry.params.scalars.items()}
    return (
        f"Val Loss: {_g3(entry.upsilon)} (Where the val loss per dimension is {dims})"
        f" Iteration: {entry.generation}\n"
        f"###\n```\n{entry.canonical_text}```\noptimized_parameters = {scalars!r}\n###"
    )


def _completions_block(population: Population) -> str:
    # worst first, best ("lowest validation loss") last
    ordered = sorted(population.entries, key=lambda e: -e.upsilon)
    return "\n\n".join(format_population_entry(e) for e in ordered)


def _history_block(population: Population) -> str:
    return "\n".join(
        f"Iteration {g}. Best Val Loss: {v!r}. Model description: {d}"
        for g, v, d in population.history
    )


def render_modeling_prompt(ctx: ModelingContext, population: Population,
                           feedback: Feedback | None, generation: int) -> list[dict]:
    """System + user messages for the modeling agent at one generation."""
    if generation < 1:
        raise ValueError("generations are numbered from 1")
    task = _FIRST_TASK.format(
        system_description=ctx.system_description,
        objective=ctx.objective,
        requirements=ctx.requirements,
        skeleton=ctx.skeleton,
        useful=_USEFUL_TO_KNOW.format(generations=ctx.generations),
        generation=generation,
        generations=ctx.generations,
    )
    if generation > 1 and len(population) > 0:
        task += "\n\n" + _REGENERATE.format(
            completions=_completions_block(population),
            feedback=feedback.text if feedback and feedback.text else "(none)",
            generation=generation,
            generations=ctx.generations,
            skeleton=ctx.skeleton,
        )
    return [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": task},
    ]


def render_reflection_prompt(requirements: str, population: Population,
                             next_generation: int, generations: int) -> list[dict]:
    """System + user messages for the evaluation agent."""
    if len(population) == 0:
        raise ValueError("reflection needs a non-empty population")
    task = _REFLECTION.format(
        history=_history_block(population),
        completions=_completions_block(population),
        generation=next_generation,
        generations=generations,
    )
    task += f"\n\nRequirement Specification:```\n{requirements}\n```"
    return [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": task},
    ]


# ---------------------------------------------------------------------------
# Clients


class HttpClient:
    """Chat-completion client for an OpenAI-style HTTP endpoint.

    Retries timeouts, connection errors, and non-success statuses up to
    cfg.retries times, then raises TransportError.  Safe for concurrent
    use by independent runs (each run should own its own instance so the
    transcript stays per-run).
    """

    RETRY_STATUSES = (408, 409, 429, 500, 502, 503, 504)

    def __init__(self, base_url: str, api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("HDTWIN_LLM_API_KEY", "")
        self.transcript: list[dict] = []

    def complete(self, messages: list[dict], cfg: DecodingConfig) -> str:
        payload = {
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(cfg.retries + 1):
            if attempt and cfg.retry_wait:
                time.sleep(cfg.retry_wait)
            try:
                resp = requests.post(f"{self.base_url}/chat/completions", json=payload,
                                     headers=headers, timeout=cfg.timeout)
            except requests.RequestException as err:
                last = TransportError(f"request failed: {err}")
                continue
            if resp.status_code != 200:
                last = TransportError(f"endpoint returned HTTP {resp.status_code}")
                if resp.status_code in self.RETRY_STATUSES:
                    continue
                raise last
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as err:
                last = TransportError(f"malformed reply body: {err}")
                continue
            self.transcript.append({"request": messages, "reply": text})
            return text
        raise last if last is not None else TransportError("no attempts made")


class ScriptedClient:
    """Replays canned replies in order; raises ReplayExhausted when empty."""

    def __init__(self, replies: list[str]):
        self._replies = list(replies)
        self._cursor = 0
        self.transcript: list[dict] = []

    @classmethod
    def from_file(cls, path) -> "ScriptedClient":
        """Load a replay file: a JSON list of reply strings, or a recorded
        transcript (list of {"request": ..., "reply": ...} objects)."""
        with open(path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, list):
            raise ValueError(f"{path}: replay file must be a JSON list")
        replies = [item["reply"] if isinstance(item, dict) else item for item in doc]
        if not all(isinstance(r, str) for r in replies):
            raise ValueError(f"{path}: replay entries must be strings or objects with a 'reply'")
        return cls(replies)

    def complete(self, messages: list[dict], cfg: DecodingConfig) -> str:
        if self._cursor >= len(self._replies):
            raise ReplayExhausted(
                f"replay exhausted after {len(self._replies)} replies"
            )
        reply = self._replies[self._cursor]
        self._cursor += 1
        self.transcript.append({"request": messages, "reply": reply})
        return reply


def save_replay(replies: list[str], path):
    with open(path, "w") as fh:
        json.dump(replies, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Agent operations

_JSON_RE = re.compile(r"\{.*\}", re.DOTALL)


def _extract_reply_fields(reply: str) -> tuple[str, str]:
    """Pull the spec text and description out of a (possibly fenced) JSON reply."""
    body = reply.strip()
    if body.startswith("```"):
        body = re.sub(r"^```[a-zA-Z]*\n?", "", body)
        body = re.sub(r"\n?```$", "", body.strip())
    try:
        doc = json.loads(body)
    except json.JSONDecodeError:
        match = _JSON_RE.search(body)
        if match is None:
            raise ValueError("reply carries no JSON object")
        doc = json.loads(match.group())
    if not isinstance(doc, dict) or REPLY_FIELD_SPEC not in doc:
        raise ValueError(f'reply JSON must carry a "{REPLY_FIELD_SPEC}" field')
    spec_text = doc[REPLY_FIELD_SPEC]
    if not isinstance(spec_text, str) or not spec_text.strip():
        raise ValueError(f'"{REPLY_FIELD_SPEC}" must be a non-empty string')
    return spec_text, str(doc.get(REPLY_FIELD_DESCRIPTION, ""))


def check_proposal(spec_text: str, schema: SystemSchema) -> tuple[ModelSpec | None, list[str]]:
    """Parse and validate one proposed spec; returns (spec, problems)."""
    try:
        spec = parse_model_spec(spec_text)
    except DslError as err:
        return None, [f"parse error: {err}"]
    problems = [str(v) for v in validate(spec, schema)]
    if not problems and spec.param_count() > PARAM_COUNT_CAP:
        problems.append(
            f"the specification has {spec.param_count()} optimizable parameters,"
            f" more than the allowed {PARAM_COUNT_CAP}; use smaller networks"
        )
    return (spec if not problems else None), problems


def propose(client, ctx: ModelingContext, schema: SystemSchema, population: Population,
            feedback: Feedback | None, generation: int,
            decoding: DecodingConfig) -> tuple[ModelSpec, str]:
    """Ask the modeling agent for a spec, re-prompting with the violation
    messages on invalid replies; at most 1 + retries requests."""
    messages = render_modeling_prompt(ctx, population, feedback, generation)
    convo = list(messages)
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
            {"role": "user", "content": (
                "Your previous reply could not be used:\n"
                + "\n".join(f"* {p}" for p in problems)
                + '\nReply again with a single JSON object carrying the corrected'
                  ' "spec" and "description" fields.'
            )},
        ]
    raise ProposalFailure(problems)


def critique(client, requirements: str, population: Population, next_generation: int,
             generations: int, decoding: DecodingConfig) -> Feedback:
    """Ask the evaluation agent for improvement feedback (free-form text)."""
    messages = render_reflection_prompt(requirements, population, next_generation, generations)
    try:
        text = client.complete(messages, decoding)
    except TransportError:
        return Feedback("", next_generation, warning=True)
    if not text.strip():
        return Feedback("", next_generation, warning=True)
    return Feedback(text, next_generation)


def make_reply(spec_text: str, description: str) -> str:
    """The JSON reply envelope a well-behaved modeling agent sends back;
    handy for building replay files."""
    return json.dumps({REPLY_FIELD_SPEC: spec_text, REPLY_FIELD_DESCRIPTION: description})
