"""Ground-truth dynamical systems and seeded dataset generation.

Every built-in system carries its true dynamics as an ordinary model
spec, so the generator and the evaluation engine share one Euler
implementation; regenerating a stored trajectory through the engine
reproduces it exactly.

Systems:
  cancer, cancer-chemo, cancer-chemo-radio
      Lung-tumor growth under optional chemotherapy/radiotherapy, with a
      tumor-size-dependent Bernoulli dosing policy.
  seir-covid
      A four-compartment epidemic surrogate on normalized populations.
  lv2, lv3-plankton
      Two- and three-species predator-prey systems.
  synthetic-1 .. synthetic-5
      Procedural variants of the treated tumor system with extra
      trigonometric, time, and interaction terms.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hdtwin.dsl import ModelSpec, SystemSchema, VarSpec, parse_model_spec
from hdtwin.engine import (
    Dataset,
    Evaluator,
    ParamVector,
    Trajectory,
    euler_step,
    init_params,
)

BUILTIN_IDS = (
    "cancer",
    "cancer-chemo",
    "cancer-chemo-radio",
    "seir-covid",
    "lv2",
    "lv3-plankton",
    "synthetic-1",
    "synthetic-2",
    "synthetic-3",
    "synthetic-4",
    "synthetic-5",
)


@dataclass(frozen=True)
class CancerPolicyParams:
    """Dose-assignment policy: treatment probability rises with tumor size."""

    d_max: float = 13.0          # largest tumor diameter, cm
    theta_c: float = 13.0 / 2.0
    theta_r: float = 13.0 / 2.0
    gamma_c: float = 2.0
    gamma_r: float = 2.0
    chemo_quantum: float = 5.0   # mg/m^3 per administration
    radio_quantum: float = 2.0   # Gy per fraction


@dataclass(frozen=True)
class SystemDef:
    id: str
    schema: SystemSchema
    spec: ModelSpec              # true dynamics, engine-evaluable
    true_params: ParamVector
    horizon: int                 # steps per trajectory
    default_n: int               # trajectories per split
    family: str                  # "cancer" | "seir" | "lv"
    title: str
    var_notes: dict[str, str]
    policy: CancerPolicyParams | None = None


@dataclass
class GenConfig:
    n: int | None = None         # trajectories per split; None uses the system default
    seed: int = 0
    ood: bool = False            # disjoint train/test initial-volume supports, dt = 1/24
    intervention: bool = False   # scale beta on the test split from intervention_day on
    intervention_day: float = 19.0
    intervention_scale: float = 0.25

    def __post_init__(self):
        if self.n is not None and self.n < 1:
            raise ValueError("n must be >= 1")


# ---------------------------------------------------------------------------
# Built-in definitions

_TUMOR_RANGE = VarSpec("tumor_volume", 0.01433, 1170.861)
_CONC_RANGE = VarSpec("chemotherapy_drug_concentration", 0.0, 9.9975)
_CHEMO_DOSE = VarSpec("chemotherapy_dosage", 0.0, 5.0)
_RADIO_DOSE = VarSpec("radiotherapy_dosage", 0.0, 2.0)

_CANCER_PARAMS = """
param rho = 7e-05
param kcap = 30.0
"""

_CANCER_NOTES = {
    "tumor_volume": "Volume of the tumor with units cm^3",
    "chemotherapy_drug_concentration":
        "Concentration of the chemotherapy drug vinblastine with units mg/m^3",
    "chemotherapy_dosage": "Dosage of the chemotherapy drug vinblastine with units mg/m^3",
    "radiotherapy_dosage": "Dosage of the radiotherapy with units Gy",
}

_CANCER_TITLE = ("Prediction of Treatment Response for Combined Chemo and Radiation"
                 " Therapy for Non-Small Cell Lung Cancer Patients Using a"
                 " Bio-Mathematical Model")

_SEIR_NOTES = {
    "susceptible": "Ratio of the population that is susceptible to the virus.",
    "exposed": "Ratio of the population that is exposed to the virus, not yet infectious.",
    "infected": "Ratio of the population that is actively carrying and transmitting the virus.",
    "recovered": "Ratio of the population that have recovered from the virus,"
                 " including those who are deceased.",
}

_LV2_NOTES = {
    "hare_population": "Annual count of hare pelts, a proxy for the hare population size,"
                       " in tens of thousands.",
    "lynx_population": "Annual count of lynx pelts, a proxy for the lynx population size,"
                       " in tens of thousands.",
}

_LV3_NOTES = {
    "prey_population": "Total count of algae, serving as the primary prey",
    "intermediate_population": "Total count of flagellates, acting as intermediate"
                               " predators and prey",
    "top_predators_population": "Total count of rotifers, representing top predators",
}


def _cancer_bracket(extra: str = "") -> str:
    core = ("rho * log(kcap / tumor_volume)"
            " - beta_c * chemotherapy_drug_concentration"
            " - (alpha_r * radiotherapy_dosage + beta_r * radiotherapy_dosage ^ 2.0)")
    return f"({core}{extra}) * tumor_volume"


def _cancer_system(sys_id: str) -> SystemDef:
    if sys_id == "cancer":
        schema = SystemSchema(states=(_TUMOR_RANGE,), actions=(), time_units="days", dt=1.0)
        text = _CANCER_PARAMS + (
            "d(tumor_volume)/dt = rho * log(kcap / tumor_volume) * tumor_volume\n"
        )
        policy = None
    elif sys_id == "cancer-chemo":
        schema = SystemSchema(states=(_TUMOR_RANGE, _CONC_RANGE), actions=(_CHEMO_DOSE,),
                              time_units="days", dt=1.0)
        text = _CANCER_PARAMS + "param beta_c = 0.028\n" + (
            "d(tumor_volume)/dt = (rho * log(kcap / tumor_volume)"
            " - beta_c * chemotherapy_drug_concentration) * tumor_volume\n"
            "d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage"
            " - 0.5 * chemotherapy_drug_concentration\n"
        )
        policy = CancerPolicyParams()
    else:
        schema = SystemSchema(states=(_TUMOR_RANGE, _CONC_RANGE),
                              actions=(_CHEMO_DOSE, _RADIO_DOSE), time_units="days", dt=1.0)
        extra = {
            "cancer-chemo-radio": "",
            "synthetic-1": " + gamma_s * sin(omega_s * t)",
            "synthetic-2": " - delta_s * 10.0",
            "synthetic-4": " + eps_s * cos(phi_s * t)",
            "synthetic-5": " - theta_s * chemotherapy_drug_concentration * radiotherapy_dosage",
        }
        decl = {
            "synthetic-1": "param gamma_s = 0.02\nparam omega_s = 0.3\n",
            "synthetic-2": "param delta_s = 0.005\n",
            "synthetic-3": "",
            "synthetic-4": "param eps_s = 0.02\nparam phi_s = 0.3\n",
            "synthetic-5": "param theta_s = 0.01\n",
        }.get(sys_id, "")
        # alpha_r / beta_r = 10 by construction
        head = _CANCER_PARAMS + "param beta_c = 0.028\nparam alpha_r = 0.0398\nparam beta_r = 0.00398\n" + decl
        if sys_id == "synthetic-3":
            tumor = ("d(tumor_volume)/dt = (rho * log(kcap / (tumor_volume + 10.0))"
                     " - beta_c * chemotherapy_drug_concentration"
                     " - (alpha_r * radiotherapy_dosage + beta_r * radiotherapy_dosage ^ 2.0))"
                     " * tumor_volume\n")
        else:
            tumor = f"d(tumor_volume)/dt = {_cancer_bracket(extra[sys_id])}\n"
        text = head + tumor + (
            "d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage"
            " - 0.5 * chemotherapy_drug_concentration\n"
        )
        policy = CancerPolicyParams()
    spec = parse_model_spec(text)
    return SystemDef(
        id=sys_id, schema=schema, spec=spec, true_params=init_params(spec),
        horizon=60, default_n=1000, family="cancer", title=_CANCER_TITLE,
        var_notes=_CANCER_NOTES, policy=policy,
    )


def _seir_system() -> SystemDef:
    schema = SystemSchema(
        states=tuple(VarSpec(n, 0.0, 1.0)
                     for n in ("susceptible", "exposed", "infected", "recovered")),
        actions=(), time_units="days", dt=1.0,
    )
    text = """
param beta = 0.3
param sigma = 0.2
param gamma = 0.1
d(susceptible)/dt = -beta * susceptible * infected
d(exposed)/dt = beta * susceptible * infected - sigma * exposed
d(infected)/dt = sigma * exposed - gamma * infected
d(recovered)/dt = gamma * infected
"""
    spec = parse_model_spec(text)
    return SystemDef(
        id="seir-covid", schema=schema, spec=spec, true_params=init_params(spec),
        horizon=60, default_n=24, family="seir",
        title="Prediction model of COVID-19 Epidemic Dynamics",
        var_notes=_SEIR_NOTES,
    )


def _lv2_system() -> SystemDef:
    schema = SystemSchema(
        states=(VarSpec("hare_population", 0.0, 30.0), VarSpec("lynx_population", 0.0, 15.0)),
        actions=(), time_units="years", dt=0.05,
    )
    text = """
param alpha = 1.1
param beta = 0.4
param gamma = 0.4
param delta = 0.1
d(hare_population)/dt = alpha * hare_population - beta * hare_population * lynx_population
d(lynx_population)/dt = delta * hare_population * lynx_population - gamma * lynx_population
"""
    spec = parse_model_spec(text)
    return SystemDef(
        id="lv2", schema=schema, spec=spec, true_params=init_params(spec),
        horizon=160, default_n=20, family="lv",
        title="Modeling Di-Trophic Prey-Predator Dynamics in a Two-Species"
              " Ecological System",
        var_notes=_LV2_NOTES,
    )


def _lv3_system() -> SystemDef:
    schema = SystemSchema(
        states=(VarSpec("prey_population", 0.0, 5.0),
                VarSpec("intermediate_population", 0.0, 5.0),
                VarSpec("top_predators_population", 0.0, 5.0)),
        actions=(), time_units="days", dt=0.05,
    )
    text = """
param alpha = 0.8
param beta = 0.9
param delta = 0.5
param gamma = 0.3
param epsilon = 0.6
param mu = 0.2
param nu = 0.3
d(prey_population)/dt = prey_population * (alpha - beta * intermediate_population - delta * top_predators_population)
d(intermediate_population)/dt = intermediate_population * (epsilon * prey_population - gamma)
d(top_predators_population)/dt = top_predators_population * (nu * prey_population - mu)
"""
    spec = parse_model_spec(text)
    return SystemDef(
        id="lv3-plankton", schema=schema, spec=spec, true_params=init_params(spec),
        horizon=60, default_n=20, family="lv",
        title="Modeling Artificial Tri-Trophic Prey-Predator Oscillations in a"
              " Simplified Ecological System",
        var_notes=_LV3_NOTES,
    )


def builtin_system(sys_id: str) -> SystemDef:
    """Fully parameterized definition for one of the built-in systems."""
    if sys_id in ("cancer", "cancer-chemo", "cancer-chemo-radio") or sys_id.startswith("synthetic-"):
        if sys_id not in BUILTIN_IDS:
            raise KeyError(f"unknown system {sys_id!r}")
        return _cancer_system(sys_id)
    if sys_id == "seir-covid":
        return _seir_system()
    if sys_id == "lv2":
        return _lv2_system()
    if sys_id == "lv3-plankton":
        return _lv3_system()
    raise KeyError(f"unknown system {sys_id!r}; available: {', '.join(BUILTIN_IDS)}")


# ---------------------------------------------------------------------------
# Treatment policy


def volume_to_diameter(volume: float) -> float:
    """Sphere relation D = (6 V / pi)^(1/3)."""
    return (6.0 * max(volume, 0.0) / math.pi) ** (1.0 / 3.0)


def cancer_dose_probabilities(volume: float, policy: CancerPolicyParams) -> tuple[float, float]:
    d_bar = volume_to_diameter(volume)
    p_c = _sigmoid(policy.gamma_c / policy.d_max * (d_bar - policy.theta_c))
    p_r = _sigmoid(policy.gamma_r / policy.d_max * (d_bar - policy.theta_r))
    return p_c, p_r


def sample_cancer_actions(volume: float, policy: CancerPolicyParams,
                          rng: np.random.Generator) -> tuple[float, float]:
    """Bernoulli chemo/radio doses from the size-dependent policy."""
    p_c, p_r = cancer_dose_probabilities(volume, policy)
    chemo = policy.chemo_quantum if rng.random() < p_c else 0.0
    radio = policy.radio_quantum if rng.random() < p_r else 0.0
    return chemo, radio


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


# ---------------------------------------------------------------------------
# Dataset generation


def _sample_initial_state(system: SystemDef, rng: np.random.Generator,
                          volume_range: tuple[float, float]) -> np.ndarray:
    if system.family == "cancer":
        x0 = np.zeros(system.schema.d_x)
        x0[0] = rng.uniform(*volume_range)
        return x0
    if system.family == "seir":
        i0 = rng.uniform(0.01, 0.1)
        return np.array([1.0 - i0, 0.0, i0, 0.0])
    # lv families: spread the starts wide so transients excite every
    # interaction term, not just the attractor manifold
    return rng.uniform(0.2, 2.5, size=system.schema.d_x)


def _sample_action(system: SystemDef, state: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    if system.policy is None or system.schema.d_u == 0:
        return np.zeros(system.schema.d_u)
    chemo, radio = sample_cancer_actions(float(state[0]), system.policy, rng)
    return np.array([chemo, radio][: system.schema.d_u])


def _simulate(system: SystemDef, ev: Evaluator, x0: np.ndarray, dt: float,
              rng: np.random.Generator, scaled_params: ParamVector | None = None,
              switch_time: float | None = None) -> Trajectory:
    steps = system.horizon
    states = np.empty((steps + 1, system.schema.d_x))
    actions = np.empty((steps + 1, system.schema.d_u))
    states[0] = x0
    x = x0.reshape(1, -1)
    for k in range(steps):
        t_k = k * dt
        actions[k] = _sample_action(system, states[k], rng)
        params = system.true_params
        if scaled_params is not None and switch_time is not None and t_k >= switch_time:
            params = scaled_params
        f = ev.derivatives(params, x, actions[k].reshape(1, -1), np.array([t_k]))
        x = euler_step(x, f, dt)
        states[k + 1] = x[0]
    actions[steps] = _sample_action(system, states[steps], rng)
    return Trajectory(np.arange(steps + 1) * dt, states, actions)


OOD_TRAIN_VOLUMES = (0.0, 574.0)
OOD_TEST_VOLUMES = (804.0, 1149.0)
IID_VOLUMES = (0.0, 1149.0)


def generate_dataset(system: SystemDef, cfg: GenConfig) -> dict[str, Dataset]:
    """Seeded train/val/test datasets (plus `test_iid` in OOD mode).

    The three splits draw from disjoint child streams of the config seed,
    so they share no trajectory and regeneration is byte-reproducible.
    """
    if cfg.ood and system.family != "cancer":
        raise ValueError("OOD mode is defined for the tumor systems only")
    if cfg.intervention and system.family != "seir":
        raise ValueError("intervention mode is defined for the epidemic system only")
    schema = system.schema
    if cfg.ood:
        schema = dataclasses.replace(schema, dt=1.0 / 24.0)
    ev = Evaluator(system.spec, system.schema)
    scaled = None
    if cfg.intervention:
        scaled = system.true_params.copy()
        scaled.scalars["beta"] *= cfg.intervention_scale

    n = cfg.n or system.default_n
    names = ["train", "val", "test", "test_iid"] if cfg.ood else ["train", "val", "test"]
    streams = np.random.SeedSequence(cfg.seed).spawn(len(names))
    out: dict[str, Dataset] = {}
    for name, stream in zip(names, streams):
        rng = np.random.default_rng(stream)
        if cfg.ood:
            volumes = OOD_TEST_VOLUMES if name == "test" else OOD_TRAIN_VOLUMES
        else:
            volumes = IID_VOLUMES
        use_scaled = scaled if (cfg.intervention and name == "test") else None
        trajectories = []
        for _ in range(n):
            x0 = _sample_initial_state(system, rng, volumes)
            trajectories.append(
                _simulate(system, ev, x0, schema.dt, rng,
                          scaled_params=use_scaled,
                          switch_time=cfg.intervention_day if use_scaled is not None else None)
            )
        split = "test" if name == "test_iid" else name
        out[name] = Dataset(trajectories, schema, split)
    return out


# ---------------------------------------------------------------------------
# Loader for externally supplied single-trajectory CSV files


def load_csv_dataset(path: str | Path, schema: SystemSchema,
                     splits: tuple = (0.7, 0.15, 0.15)) -> dict[str, Dataset]:
    """Chronological train/val/test split of a single-trajectory CSV.

    The file layout matches the generator export: header ``t, x_1..x_dX,
    u_1..u_dU`` with one row per time step.  `splits` is either three
    fractions (rows are divided floor-then-remainder, nothing dropped) or
    three absolute row counts (trailing rows beyond their sum are dropped,
    as for the 92-row hare-lynx and 102-row plankton files).
    """
    import csv as _csv

    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    if not rows or len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    width = 1 + schema.d_x + schema.d_u
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {width}")
        try:
            body.append([float(v) for v in row])
        except ValueError as err:
            raise ValueError(f"{path}: row {i}: {err}") from None
    data = np.array(body)
    times = data[:, 0]
    if np.any(np.diff(times) <= 0):
        raise ValueError(f"{path}: time column is not strictly increasing")

    n = len(data)
    if all(isinstance(s, int) for s in splits):
        n_train, n_val, n_test = splits
        if n_train + n_val + n_test > n:
            raise ValueError(f"{path}: split sizes {splits} exceed {n} rows")
    else:
        f_train, f_val, _ = splits
        n_train = int(n * f_train)
        n_val = int(n * f_val)
        n_test = n - n_train - n_val
    bounds = [0, n_train, n_train + n_val, n_train + n_val + n_test]
    out = {}
    for split, lo, hi in zip(("train", "val", "test"), bounds, bounds[1:]):
        chunk = data[lo:hi]
        out[split] = Dataset(
            [Trajectory(chunk[:, 0], chunk[:, 1:1 + schema.d_x],
                        chunk[:, 1 + schema.d_x:width])],
            schema, split,
        )
    return out


# ---------------------------------------------------------------------------
# Modeling-context text


def system_description(system: SystemDef, n_trajectories: int | None = None) -> str:
    """The natural-language system description shown to the modeling agent."""
    sch = system.schema
    n = n_trajectories or system.default_n
    states = ", and ".join(sch.state_names) if sch.d_x > 1 else sch.state_names[0]
    if sch.d_u:
        acts = ", and ".join(sch.action_names) if sch.d_u > 1 else sch.action_names[0]
        second = f"Here you must model the state differential of {states}; with the input actions of {acts}."
    else:
        second = f"Here you must model the state differential of {states}; with no input actions."
    lines = [system.title, "", second, "", "Description of the variables:"]
    for v in list(sch.states) + list(sch.actions):
        note = system.var_notes.get(v.name, v.name.replace("_", " "))
        lines.append(f"* {v.name}: {note}")
    lines += ["", f"The time units is in {sch.time_units}.", "",
              "Additionally these variables have the ranges of:"]
    for v in list(sch.states) + list(sch.actions):
        lines.append(f"* {v.name}: [{v.low}, {v.high}]")
    unit = {"cancer": "patients", "seir": "countries"}.get(system.family, "trajectories")
    lines += ["", f"The training dataset consists of {n} {unit}, where each is observed"
                  f" for {system.horizon} {sch.time_units}."]
    return "\n".join(lines)
