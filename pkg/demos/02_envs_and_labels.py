#!/usr/bin/env python3
"""The two toy tasks and the trajectory-level labeling oracle.

Both environments hide a binary per-step cost and a budget of 25; the only
supervision the learning side ever sees is the oracle's single safe/unsafe
bit per trajectory segment.
"""

import numpy as np

from safecredit.envs import EnvConfig, make_env, true_label
from safecredit.envs.datasets import generate_labeled_segments

# Point mass on a ring with three hazard discs planted on the racing line.
env = make_env(EnvConfig(env_id="hazard_point", horizon=200, budget=25.0))
obs = env.reset(seed=0)
print("hazard_point geometry:", env.geometry())

rng = np.random.default_rng(1)
total_cost = 0
done = False
while not done:
    result = env.step(rng.uniform(-1, 1, size=2))
    total_cost += result.true_cost
    done = result.done
print(f"random policy: total true cost {total_cost} over 200 steps "
      f"(safe iff <= 25)")

# The chain task: reward and cost share the top state, so the budget binds.
chain = make_env(EnvConfig(env_id="chain_mdp", horizon=60, budget=25.0))
segments = generate_labeled_segments(
    EnvConfig(env_id="chain_mdp", horizon=60, budget=25.0),
    n_segments=10, seed=2)
for segment, label in segments[:5]:
    recomputed = true_label(segment, budget=25.0)
    print(f"segment len={len(segment):2d} cost={segment.total_true_cost:4.0f} "
          f"label={label} (oracle recheck: {recomputed})")

# Labels are monotone: extending a segment can never turn unsafe into safe.
segment, _ = segments[0]
labels = [true_label(segment.slice(segment.t_start, t), 25.0)
          for t in range(segment.t_start, segment.t_end + 1)]
print("prefix labels:", "".join(str(l) for l in labels))
