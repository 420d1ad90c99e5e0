"""A full evolution run with a scripted (offline) modeling agent.

The search loop is: the modeling agent proposes a spec, its parameters
are fitted to the training data, the candidate joins the top-K population
by validation loss, and the evaluation agent's feedback steers the next
proposal.  Here both agents are replayed from canned replies, which makes
the run deterministic and offline; swap in HttpClient for a live model.
"""

from hdtwin.agents import ScriptedClient, make_reply
from hdtwin.optim import OptimConfig
from hdtwin.orchestrator import EvolveConfig, evolve, make_modeling_context
from hdtwin.systems import GenConfig, builtin_system, generate_dataset

system = builtin_system("cancer-chemo")
data = generate_dataset(system, GenConfig(n=30, seed=1))

linear = make_reply(
    "param growth = 0.05\n"
    "param kill = 0.02\n"
    "d(tumor_volume)/dt = growth * tumor_volume"
    " - kill * chemotherapy_drug_concentration * tumor_volume\n"
    "d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage"
    " - chemotherapy_drug_concentration\n",
    "white box, exponential growth with a linear kill term",
)
feedback = ("Growth without saturation overshoots the large tumors and the unit decay rate"
            " underfits the drug concentration; add a carrying capacity and fit the decay.")
logistic = make_reply(
    "param growth = 0.05\n"
    "param capacity = 1000.0\n"
    "param kill = 0.02\n"
    "param decay = 0.4\n"
    "d(tumor_volume)/dt = growth * tumor_volume * (1 - tumor_volume / capacity)"
    " - kill * chemotherapy_drug_concentration * tumor_volume\n"
    "d(chemotherapy_drug_concentration)/dt = chemotherapy_dosage"
    " - decay * chemotherapy_drug_concentration\n",
    "white box, logistic growth with fitted drug decay",
)

client = ScriptedClient([linear, feedback, logistic])
cfg = EvolveConfig(generations=2,
                   optim=OptimConfig(batch_size=500, max_epochs=150, patience=15, seed=1),
                   seed=1)
ctx = make_modeling_context(system, cfg.generations, n_trajectories=30)

result = evolve(ctx, system, data, cfg, client)

print("generation log:")
for record in result.records:
    print(f"  gen {record.generation}: {record.status:16s} val loss ="
          f" {record.upsilon:.4e}  ({record.description})")
print(f"\nbest candidate: generation {result.best.generation},"
      f" val loss {result.best.upsilon:.4e}")
print(result.best.canonical_text)
print(f"test MSE (one-step): {result.test.upsilon:.4e}")
print(f"test MSE (full rollout): {result.test.rollout:.4e}")
