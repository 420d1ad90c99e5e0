"""Run a method over several seeds and aggregate the test metric.

Each seed regenerates its own train/val/test datasets; the report carries
every per-seed outcome (including failures) plus the mean with a 95%
Student-t half-width.
"""

from hdtwin.optim import OptimConfig
from hdtwin.orchestrator import EvolveConfig, run_experiment
from hdtwin.systems import GenConfig

report = run_experiment(
    "lv2", "baseline:lv2", seeds=[0, 1, 2],
    evolve_cfg=EvolveConfig(
        generations=1,
        optim=OptimConfig(batch_size=500, max_epochs=120, patience=15),
    ),
    gen_cfg=GenConfig(n=8),
)

print(f"system={report.system} method={report.method} metric={report.metric_name}")
for outcome in report.outcomes:
    status = f"{outcome.metric:.4e}" if outcome.metric is not None else f"failed: {outcome.error}"
    print(f"  seed {outcome.seed}: {status}")
print(f"aggregate: {report.mean:.4e} +/- {report.half_width:.4e} (95% CI)")
