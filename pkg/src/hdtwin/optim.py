"""Parameter fitting: shuffled mini-batch Adam on the one-step MSE with
early stopping on full-validation loss.

The batching unit is the transition tuple (x, u, y); validation is
evaluated on the complete validation set once per epoch, plus once
before the first update so the returned snapshot is never worse than the
initial parameters.  An epoch counts as an improvement only when the
validation loss drops by more than 1e-12, which keeps float noise from
resetting the patience window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from hdtwin.dsl import ModelSpec
from hdtwin.engine import (
    Dataset,
    EvaluationFault,
    Evaluator,
    Gradients,
    ParamVector,
    per_component_mse,
)

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-12

# Specs above this optimizable-parameter count are refused before fitting;
# the message is relayed to the proposing agent.
PARAM_COUNT_CAP = 100_000


@dataclass
class OptimConfig:
    lr: float = 0.01
    batch_size: int = 1000
    max_epochs: int = 2000
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("all optimizer settings must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


@dataclass
class FitResult:
    params: ParamVector
    val_loss: float                  # best validation loss (mean over components)
    component_losses: np.ndarray     # per-component validation MSE at the best epoch
    epochs_run: int
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)  # [epoch 0, epoch 1, ...]
    faulted: bool = False


def adam_update(param, grad, m, v, step: int, cfg: OptimConfig):
    """One bias-corrected Adam update; works on scalars and arrays alike."""
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    param = param - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return param, m, v


class _AdamState:
    def __init__(self, params: ParamVector):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.step = 0

    def apply(self, params: ParamVector, grads: Gradients, cfg: OptimConfig):
        self.step += 1
        for name in params.scalars:
            params.scalars[name], self.m.scalars[name], self.v.scalars[name] = adam_update(
                params.scalars[name], grads.scalars[name],
                self.m.scalars[name], self.v.scalars[name], self.step, cfg,
            )
        for name, layers in params.weights.items():
            for li, (w, b) in enumerate(layers):
                g_w, g_b = grads.weights[name][li]
                m_w, m_b = self.m.weights[name][li]
                v_w, v_b = self.v.weights[name][li]
                w, m_w, v_w = adam_update(w, g_w, m_w, v_w, self.step, cfg)
                b, m_b, v_b = adam_update(b, g_b, m_b, v_b, self.step, cfg)
                layers[li] = (w, b)
                self.m.weights[name][li] = (m_w, m_b)
                self.v.weights[name][li] = (v_w, v_b)


def fit(spec: ModelSpec, init: ParamVector, train: Dataset, val: Dataset,
        cfg: OptimConfig | None = None) -> FitResult:
    """Fit a spec's parameters to training data, returning the snapshot
    with the best full-validation loss.

    A non-finite loss or gradient anywhere sets the fault flag and returns
    the best snapshot seen so far (validation loss +inf if none).
    """
    cfg = cfg or OptimConfig()
    n_params = spec.param_count()
    if n_params > PARAM_COUNT_CAP:
        raise ValueError(
            f"spec has {n_params} optimizable parameters, more than the cap of"
            f" {PARAM_COUNT_CAP}; reduce network sizes"
        )
    ev = Evaluator(spec, train.schema)
    ev.check_params(init)
    params = init.copy()
    batch_all = train.transitions()
    dt = train.schema.dt
    rng = np.random.default_rng(cfg.seed)
    adam = _AdamState(params)

    def validate_now():
        delta, ups = per_component_mse(spec, params, val)
        return delta, ups

    try:
        best_delta, best_val = validate_now()
    except EvaluationFault as fault:
        log.warning("fit aborted: initial parameters fault (%s)", fault)
        return FitResult(params, float("inf"), np.full(train.schema.d_x, np.inf),
                         0, [], [], faulted=True)
    best_params = params.copy()
    val_curve = [best_val]
    train_curve: list[float] = []
    since_improvement = 0
    epochs_run = 0
    faulted = False

    n = len(batch_all)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        try:
            for lo in range(0, n, cfg.batch_size):
                batch = batch_all.take(order[lo:lo + cfg.batch_size])
                loss, grads = ev.loss_and_grad(params, batch, dt)
                epoch_losses.append(loss)
                adam.apply(params, grads, cfg)
            delta, ups = validate_now()
        except EvaluationFault as fault:
            log.warning("fit faulted at epoch %d: %s", epoch, fault)
            faulted = True
            epochs_run = epoch
            break
        epochs_run = epoch
        train_curve.append(float(np.mean(epoch_losses)))
        val_curve.append(ups)
        if ups < best_val - IMPROVEMENT_EPS:
            best_val = ups
            best_delta = delta
            best_params = params.copy()
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= cfg.patience:
                break

    return FitResult(best_params, best_val, best_delta, epochs_run,
                     train_curve, val_curve, faulted=faulted)
