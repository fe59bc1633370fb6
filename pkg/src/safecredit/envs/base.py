"""Environment contracts, trajectory records, and the trajectory-level oracle.

The ground-truth per-step cost and the budget live inside the environment and
the :class:`Trajectory` record. They are read only by ``true_label`` (the
scripted labeling oracle) and by evaluation metrics; nothing model-facing
sees them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from safecredit.errors import ConfigError, UsageError


@dataclass
class EnvConfig:
    env_id: str = "hazard_point"
    horizon: int = 200
    budget: float = 25.0
    gamma: float = 0.99
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.budget <= 0:
            raise ConfigError("budget must be positive")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("gamma must lie in [0, 1]")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    true_cost: int
    done: bool
    step_index: int


@dataclass
class Trajectory:
    """An ordered run of steps, possibly a sub-segment of an episode.

    ``t_start``/``t_end`` are inclusive indices into the source episode, so a
    whole episode of length T has t_start=0, t_end=T-1.
    """

    observations: np.ndarray  # (T, obs_dim)
    actions: np.ndarray       # (T, act_dim)
    rewards: np.ndarray       # (T,)
    true_costs: np.ndarray    # (T,), each 0 or 1
    episode_id: str = ""
    t_start: int = 0
    t_end: int = -1

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.true_costs = np.asarray(self.true_costs, dtype=np.float64)
        if self.t_end < 0:
            self.t_end = self.t_start + len(self.rewards) - 1
        if len(self) < 1:
            raise UsageError("trajectory must contain at least one step")
        if len(self) != len(self.rewards):
            raise UsageError("index range does not match step count")

    def __len__(self):
        return self.t_end - self.t_start + 1

    @property
    def total_true_cost(self) -> float:
        return float(self.true_costs.sum())

    def slice(self, t1: int, t2: int) -> "Trajectory":
        """Sub-segment covering episode steps [t1, t2], inclusive."""
        if not (self.t_start <= t1 <= t2 <= self.t_end):
            raise UsageError(f"slice [{t1}, {t2}] outside [{self.t_start}, {self.t_end}]")
        lo, hi = t1 - self.t_start, t2 - self.t_start + 1
        return Trajectory(
            observations=self.observations[lo:hi],
            actions=self.actions[lo:hi],
            rewards=self.rewards[lo:hi],
            true_costs=self.true_costs[lo:hi],
            episode_id=self.episode_id,
            t_start=t1,
            t_end=t2,
        )


def true_label(trajectory: Trajectory, budget: float) -> int:
    """The scripted oracle: 1 iff the segment's total true cost stays within budget.

    The boundary (total == budget) counts as safe. Works on partial segments,
    summing only costs inside the segment.
    """
    if len(trajectory) < 1:
        raise UsageError("cannot label an empty trajectory")
    return 1 if trajectory.total_true_cost <= budget else 0


class Env:
    """Single-owner environment instance; reset before stepping."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self._t = 0
        self._done = True

    @property
    def obs_dim(self) -> int:
        raise NotImplementedError

    @property
    def act_dim(self) -> int:
        raise NotImplementedError

    @property
    def action_low(self) -> np.ndarray:
        return -np.ones(self.act_dim)

    @property
    def action_high(self) -> np.ndarray:
        return np.ones(self.act_dim)

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError

    def true_label(self, trajectory: Trajectory) -> int:
        return true_label(trajectory, self.config.budget)

    def _begin_episode(self):
        self._t = 0
        self._done = False

    def _check_steppable(self):
        if self._done:
            raise UsageError("step() after episode end; call reset() first")

    def _clip_action(self, action) -> np.ndarray:
        arr = np.asarray(action, dtype=np.float64).reshape(self.act_dim)
        return np.clip(arr, self.action_low, self.action_high)


def make_env(config: EnvConfig) -> Env:
    from safecredit.envs.chain_mdp import ChainMdpEnv
    from safecredit.envs.hazard_point import HazardPointEnv

    registry = {"hazard_point": HazardPointEnv, "chain_mdp": ChainMdpEnv}
    if config.env_id not in registry:
        raise ConfigError(f"unknown environment id '{config.env_id}'; "
                          f"known: {sorted(registry)}")
    return registry[config.env_id](config)


def write_trajectory_log(path, trajectories: list) -> None:
    """Line-delimited step records with a stable field order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for traj in trajectories:
            for i in range(len(traj)):
                record = {
                    "episode": traj.episode_id,
                    "t": traj.t_start + i,
                    "obs": traj.observations[i].tolist(),
                    "action": traj.actions[i].tolist(),
                    "reward": float(traj.rewards[i]),
                    "true_cost": float(traj.true_costs[i]),
                }
                fh.write(json.dumps(record) + "\n")


def read_trajectory_log(path) -> list:
    """Rebuild trajectories from a step log, grouped by episode id."""
    groups: dict[str, list[dict]] = {}
    with open(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            groups.setdefault(record["episode"], []).append(record)
    trajectories = []
    for episode_id, records in groups.items():
        records.sort(key=lambda r: r["t"])
        trajectories.append(Trajectory(
            observations=np.array([r["obs"] for r in records]),
            actions=np.array([r["action"] for r in records]),
            rewards=np.array([r["reward"] for r in records]),
            true_costs=np.array([r["true_cost"] for r in records]),
            episode_id=episode_id,
            t_start=records[0]["t"],
            t_end=records[-1]["t"],
        ))
    return trajectories
