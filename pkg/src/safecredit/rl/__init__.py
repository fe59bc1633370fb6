"""Lagrangian PPO over the learned (or true) constraint signal."""

from safecredit.rl.gae import gae
from safecredit.rl.policy import GaussianPolicy, ValueNet
from safecredit.rl.trainer import (
    LagrangianTrainer,
    RolloutBatch,
    TrainerConfig,
    constraint_limit,
    evaluate_policy,
    pseudo_cost,
)

__all__ = [
    "GaussianPolicy",
    "LagrangianTrainer",
    "RolloutBatch",
    "TrainerConfig",
    "ValueNet",
    "constraint_limit",
    "evaluate_policy",
    "gae",
    "pseudo_cost",
]
