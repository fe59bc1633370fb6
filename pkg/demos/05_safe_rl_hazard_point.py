#!/usr/bin/env python3
"""Constrained policy optimization against the learned constraint.

Runs a shortened end-to-end loop on the ring task: pretrain the constraint
model on scripted data, then train a policy whose per-step pseudo-cost is
the negated log safety score, with the multiplier keeping the discounted
pseudo-cost under -log(0.9). Compare with the oracle run that sees the true
costs. Expect a few minutes of runtime.
"""

import json

from safecredit.experiment.config import config_from_dict
from safecredit.experiment.runner import run_train

BASE = {
    "seeds": [0],
    "total_steps": 150_000,
    "eval_episodes": 30,
    "env": {"env_id": "hazard_point", "horizon": 200, "budget": 25.0},
    "pretrain": {"n_segments": 600, "epochs": 30, "min_segment_len": 40},
    "continual": {"label_every_episodes": 50, "select_fraction": 0.2},
}

print("=== oracle mode (true costs, known budget) ===")
oracle = run_train(config_from_dict(
    {**BASE, "mode": "oracle", "out_dir": "runs/demo_oracle"}))
print(json.dumps(oracle["mean"], indent=2))

print("\n=== learned-constraint mode (labels only) ===")
ssv = run_train(config_from_dict(
    {**BASE, "mode": "ssv", "out_dir": "runs/demo_ssv"}))
print(json.dumps(ssv["mean"], indent=2))

ratio = ssv["mean"]["mean_reward"] / oracle["mean"]["mean_reward"]
print(f"\nreward vs oracle: {ratio:.2f}; "
      f"cost {ssv['mean']['mean_true_cost']:.1f} vs budget 25, "
      f"labels used: {ssv['mean']['labeled_trajectories']:.0f}")
print("per-iteration metrics in runs/demo_ssv/seed0/metrics.jsonl")
