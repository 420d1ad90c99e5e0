"""Canned modeling-agent replies: a six-step tumor-model refinement that
goes from a bare linear kill model to a saturating hybrid model with a
small residual network.  Used to drive scripted evolution runs."""

from __future__ import annotations

from hdtwin.agents import make_reply

_MLP_INPUTS = ("tumor_volume, chemotherapy_drug_concentration,"
               " chemotherapy_dosage, radiotherapy_dosage")

SPEC_1 = """\
param alpha = 0.1
param beta = 0.05
param gamma = 0.03
d(tumor_volume)/dt = alpha * tumor_volume - beta * chemotherapy_drug_concentration * tumor_volume - gamma * radiotherapy_dosage * tumor_volume
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - chemotherapy_drug_concentration
"""

SPEC_2 = """\
param alpha = 0.1
param beta = 0.05
param gamma = 0.03
param kappa = 1000.0
param delta = 0.01
d(tumor_volume)/dt = alpha * tumor_volume * (1 - tumor_volume / kappa) - beta * chemotherapy_drug_concentration * tumor_volume - gamma * radiotherapy_dosage * tumor_volume
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - delta * chemotherapy_drug_concentration
"""

SPEC_3 = """\
param alpha = 0.056
param beta = 0.026
param gamma = 0.037
param kappa = 1016.0
param delta = 0.5
param eta = 0.01
d(tumor_volume)/dt = alpha * tumor_volume * (1 - tumor_volume / kappa) - beta * chemotherapy_drug_concentration * tumor_volume - gamma * radiotherapy_dosage * tumor_volume - eta * chemotherapy_drug_concentration * radiotherapy_dosage * tumor_volume
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - delta * chemotherapy_drug_concentration ^ 2.0
"""

SPEC_4 = f"""\
param alpha = 0.049
param beta = 0.024
param gamma = 0.032
param kappa = 1032.0
param delta = 0.066
param eta = 0.0024
param theta = 0.5
param rho = 0.5
param zeta = 0.1
mlp residual_mlp({_MLP_INPUTS}) hidden [10] act relu outputs 2
d(tumor_volume)/dt = alpha * tumor_volume * (1 - tumor_volume / kappa) - (beta * chemotherapy_drug_concentration * tumor_volume) / (theta + chemotherapy_drug_concentration) - gamma * radiotherapy_dosage * tumor_volume / (1 + exp(-rho * (radiotherapy_dosage - 1))) - eta * chemotherapy_drug_concentration * radiotherapy_dosage * tumor_volume / (1 + zeta * tumor_volume) + residual_mlp[0]
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - delta * chemotherapy_drug_concentration ^ 2.0 + residual_mlp[1]
"""

SPEC_5 = f"""\
param alpha = 0.0296
param beta = 0.27
param gamma = 0.0855
param kappa_base = 1032.4
param kappa_mod = 0.1
param delta_base = 0.0376
param delta_mod = 0.1
param eta = 0.038
param theta = 5.7
param rho = 0.44
param zeta = 0.12
mlp residual_mlp({_MLP_INPUTS}) hidden [20, 20] act relu outputs 2
d(tumor_volume)/dt = alpha * tumor_volume * (1 - tumor_volume / (kappa_base + kappa_mod * (chemotherapy_dosage + radiotherapy_dosage))) - (beta * chemotherapy_drug_concentration * tumor_volume) / (theta + chemotherapy_drug_concentration) - gamma * radiotherapy_dosage * tumor_volume / (1 + exp(-rho * (radiotherapy_dosage - 1))) - eta * chemotherapy_drug_concentration * radiotherapy_dosage * tumor_volume / (1 + zeta * tumor_volume) + residual_mlp[0]
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - (delta_base + delta_mod * tumor_volume) * chemotherapy_drug_concentration ^ 1.5 + residual_mlp[1]
"""

SPEC_6 = f"""\
param alpha = 0.03
param beta = 0.4
param gamma = 0.08
param kappa_base = 1030.0
param kappa_mod = -2.0
param delta_base = 0.1
param delta_mod = 0.0003
param eta = 0.004
param theta = 10.0
param rho = 0.3
param zeta = 0.15
mlp residual_mlp({_MLP_INPUTS}) hidden [16, 8] act leaky_relu outputs 2
d(tumor_volume)/dt = alpha * tumor_volume * (1 - tumor_volume / (kappa_base + kappa_mod * (chemotherapy_dosage + radiotherapy_dosage))) - (beta * chemotherapy_drug_concentration * tumor_volume) / (theta + chemotherapy_drug_concentration) - gamma * radiotherapy_dosage * tumor_volume / (1 + exp(-rho * (radiotherapy_dosage - 1))) - eta * chemotherapy_drug_concentration * radiotherapy_dosage * tumor_volume / (1 + zeta * tumor_volume) + residual_mlp[0]
d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage - (delta_base + delta_mod * tumor_volume) * chemotherapy_drug_concentration ^ 1.5 + residual_mlp[1]
"""

PROGRESSION = [
    (SPEC_1, "white box only: linear growth with linear chemo and radio kill terms"),
    (SPEC_2, "white box: logistic tumor growth plus first-order drug decay"),
    (SPEC_3, "white box: adds a chemo-radio interaction term and quadratic drug decay"),
    (SPEC_4, "white and black box: saturating chemo effect, sigmoid radio effect,"
             " resistance scaling, and a small residual network"),
    (SPEC_5, "white and black box: treatment-dependent carrying capacity,"
             " volume-dependent decay, and a wider residual network"),
    (SPEC_6, "white and black box: same structure with a leaky-relu residual network"),
]

CRITIQUES = [
    "Add a carrying-capacity term to the tumor component and give the drug decay its own"
    " rate parameter; the fixed unit decay underfits the concentration dimension.",
    "Introduce an interaction term between the two treatments and consider a nonlinear"
    " drug decay; tune initial values from the last optimized parameters.",
    "The white box terms have stopped improving; add a small residual network over the"
    " states and actions and saturate the chemotherapy effect.",
    "Let the carrying capacity and the decay rate depend on the treatments and widen the"
    " residual network.",
    "Simplify the residual network with leaky activations and restart from round"
    " parameter values to escape the current local fit.",
]


def modeling_replies() -> list[str]:
    return [make_reply(spec, desc) for spec, desc in PROGRESSION]


def evolution_replies() -> list[str]:
    """Interleaved modeling/critique replies for a 6-generation run."""
    out = []
    for k, (spec, desc) in enumerate(PROGRESSION):
        out.append(make_reply(spec, desc))
        if k < len(CRITIQUES):
            out.append(CRITIQUES[k])
    return out
