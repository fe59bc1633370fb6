#!/usr/bin/env python3
"""Inspect where a trained model concentrates its inferred cost.

Two diagnostics: quiet stretches with no true cost should carry little
|log score| (flat-region ratio well under 1), and the largest 5-step score
window should sit right after the step where cumulative cost crosses the
budget.
"""

import numpy as np

from safecredit.envs import EnvConfig
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.experiment.analysis import analyze_scores
from safecredit.models import SsvModel, train_model

env_cfg = EnvConfig(env_id="chain_mdp", horizon=60, budget=10.0)
segments = generate_labeled_segments(env_cfg, 1200, seed=3)
model = SsvModel(obs_dim=8, act_dim=1, head="distributional", seed=1)
report = train_model(model, segments, epochs=40, seed=1, target_accuracy=0.95)
print(f"model accuracy: {report.holdout_accuracy:.3f}")

fresh = generate_labeled_segments(env_cfg, 200, seed=4, slice_fraction=0.0)
scores = [model.score_sequence(s.observations, s.actions) for s, _ in fresh]
costs = [s.true_costs for s, _ in fresh]
analysis = analyze_scores(scores, costs, budget=10.0)

print("\nmean P(safe) by total-cost bucket:")
for name, stats in analysis.buckets.items():
    print(f"  cost {name:>5}: median P = {stats['median']:.3f} "
          f"(n={stats['count']})")

print(f"\nflat-region ratio (quiet |log score| / overall): "
      f"{analysis.mean_flat_ratio:.3f}")

print("\nwindow |log score| ratio vs. offset from budget crossing:")
for offset in sorted(analysis.window_mean_ratios):
    entry = analysis.window_mean_ratios[offset]
    bar = "#" * int(20 * min(entry["mean"], 3) / 3)
    print(f"  {offset:+3d}: {entry['mean']:5.2f} {bar}")
print(f"\n{analysis.n_crossing} of {analysis.n_trajectories} trajectories "
      f"cross the budget")
