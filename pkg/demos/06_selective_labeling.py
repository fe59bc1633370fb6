#!/usr/bin/env python3
"""Why label everything? Pick the segments the model is least sure about.

The distributional decoder gives each step's score a negative-lognormal
distribution; per-segment, the summed score's coefficient of variation has
a closed form. High-CV segments are the ones worth sending to the labeler.
"""

import numpy as np

from safecredit.continual import FeedbackBuffer, cv_score, retrain
from safecredit.envs import EnvConfig, true_label
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.models import SsvModel, train_model
from safecredit.models.training import holdout_accuracy

env_cfg = EnvConfig(env_id="chain_mdp", horizon=60, budget=25.0)
pretrain_set = generate_labeled_segments(env_cfg, 800, seed=11)
model = SsvModel(obs_dim=8, act_dim=1, head="distributional", seed=2)
train_model(model, pretrain_set, epochs=30, seed=2, target_accuracy=0.95)

# A fresh batch of unlabeled trajectories, as they would arrive during
# policy training.
candidates = [seg for seg, _ in
              generate_labeled_segments(env_cfg, 200, seed=12)]
estimates = [cv_score(model, segment) for segment in candidates]
cvs = np.array([e.cv for e in estimates])
print(f"CV over {len(cvs)} candidate segments: "
      f"min {cvs.min():.3f}, median {np.median(cvs):.3f}, max {cvs.max():.3f}")

buffer = FeedbackBuffer()
buffer.seed_pretraining(pretrain_set)
for segment, est in zip(candidates, estimates):
    buffer.enqueue(segment, cv=est.cv, phat=float(np.exp(est.mean)))

# Label only the most uncertain fifth, then retrain with 50% rehearsal.
chosen = buffer.select_for_labeling(len(candidates) // 5)
print(f"selected {len(chosen)} segments "
      f"(CV range {chosen[-1].cv:.3f}..{chosen[0].cv:.3f})")
labeled = buffer.labeling_tick(oracle=lambda t: true_label(t, env_cfg.budget))
print(f"oracle labeled {labeled}; cumulative label count "
      f"{buffer.labeled_total}")
report = retrain(model, buffer, rehearsal_fraction=0.5, epochs=4, seed=3)
holdout = generate_labeled_segments(env_cfg, 200, seed=13)
print(f"accuracy after selective retraining: "
      f"{holdout_accuracy(model, holdout):.3f}")
