"""Desk-scale environments with hidden binary costs and a trajectory-level oracle."""

from safecredit.envs.base import (
    EnvConfig,
    StepResult,
    Trajectory,
    make_env,
    read_trajectory_log,
    true_label,
    write_trajectory_log,
)
from safecredit.envs.chain_mdp import ChainMdpEnv, enumerate_trajectories
from safecredit.envs.hazard_point import HazardPointEnv

__all__ = [
    "ChainMdpEnv",
    "EnvConfig",
    "HazardPointEnv",
    "StepResult",
    "Trajectory",
    "enumerate_trajectories",
    "make_env",
    "read_trajectory_log",
    "true_label",
    "write_trajectory_log",
]
