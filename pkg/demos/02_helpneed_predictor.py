"""Training the HelpNeed predictor on a simulated historical cohort.

The run takes about a minute. Run with ``python3 demos/02_helpneed_predictor.py``.
"""
from collections import Counter

from helpneed import fixtures
from helpneed.policy import ExperimentSpec, PopulationSpec, historical_corpus, learn_from_history
from helpneed.predictor import ForestParams, expert_weight_search, state_feature_share, top_feature
from helpneed.stepclass import classify_steps

spec = ExperimentSpec(fixtures.PRETEST, fixtures.TRAINING, fixtures.POSTTEST,
                      historical=PopulationSpec(n_students=40, id_prefix="h"), n_trees=40)

# %% A control cohort works through the tutor without proactive hints.
history = historical_corpus(spec, seed=7)
know = learn_from_history(history, spec, seed=7)
print(f"{len(history.attempts)} attempts, {len(know.networks)} interaction networks")

# %% Every state-changing training step gets one of five classes.
counts = Counter()
for att in history.attempts:
    if att.problem_id in know.qualities:
        counts.update(r.step_class.value for r in classify_steps(att, know.qualities[att.problem_id],
                                                                 know.durations))
print("step classes:", dict(counts))
print(f"dataset: {len(know.dataset)} rows, HelpNeed rate {know.dataset.positive_rate:.3f}")

# %% Cross-validate both variants; the expert search raises the class-1 weight.
params = ForestParams(n_trees=40)
for variant in ("state_based", "state_free"):
    ws = expert_weight_search(know.dataset, variant, grid=(1.0, 2.0, 3.0), k=5, seed=7, params=params)
    print(f"{variant:11s} automated recall {ws.automated.mean_recall:.3f} AUC {ws.automated.mean_auc:.3f}"
          f" | x{ws.multiplier:g} recall {ws.expert.mean_recall:.3f} AUC {ws.expert.mean_auc:.3f}")

# %% The state-based model leans on state-quality features.
model = know.models["state_based"]
print(f"top feature {top_feature(model)}, state-feature importance share {state_feature_share(model):.2f}")
