#!/usr/bin/env python3
"""Learn the hidden constraint from trajectory-level binary labels alone.

The recurrent model folds each (state, action) into a summary vector and
emits a non-positive log score per step; the per-step scores multiply into
the segment's probability of being safe, which the labels supervise through
plain binary cross entropy. No per-step cost and no budget are ever shown
to the model.
"""

import numpy as np

from safecredit.envs import EnvConfig
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.models import SsvModel, CbModel, train_model
from safecredit.models.ssv import cumulative_log_safety

env_cfg = EnvConfig(env_id="chain_mdp", horizon=60, budget=25.0)
segments = generate_labeled_segments(env_cfg, 1200, seed=7)
print(f"{len(segments)} labeled segments, "
      f"safe fraction {np.mean([l for _, l in segments]):.2f}")

model = SsvModel(obs_dim=8, act_dim=1, head="distributional", seed=0)
report = train_model(model, segments, epochs=40, seed=0, target_accuracy=0.95)
print(f"holdout accuracy {report.holdout_accuracy:.3f} "
      f"after {report.epochs_run} epochs")

# Where does the model place the blame? Costly state is index 7.
segment, label = segments[0]
scores = model.score_sequence(segment.observations, segment.actions)
states = segment.observations.argmax(axis=1)
print("\nstate:  " + " ".join(f"{s:4d}" for s in states[:15]))
print("score:  " + " ".join(f"{s:4.2f}" for s in scores[:15]))
cumulative = cumulative_log_safety(scores)
print(f"\nlabel={label}  P(safe)={np.exp(cumulative[-1]):.3f} "
      f"(cumulative log-safety is non-increasing: "
      f"{bool(np.all(np.diff(cumulative) <= 0))})")

# The cost+budget baseline learns the same labels but is unidentifiable up
# to a joint budget/cost shift.
cb = CbModel(obs_dim=8, act_dim=1, horizon=60, seed=0)
cb_report = train_model(cb, segments, epochs=30, seed=0, target_accuracy=0.95)
print(f"\ncost+budget baseline: accuracy {cb_report.holdout_accuracy:.3f}, "
      f"learned budget {cb.budget_estimate:.2f} (true budget hidden: 25)")
