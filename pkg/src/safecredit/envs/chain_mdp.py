"""A small deterministic chain MDP used for brute-force oracle checks.

States 0..n-1 in a line; the scalar action in [-1, 1] is binned into
back / stay / forward. Reward is paid while sitting on the top state, which
is also the costly one, so reward chases cost and the budget binds. Every
trajectory is enumerable at short horizons, which makes exact checks cheap.
"""

from __future__ import annotations

import itertools

import numpy as np

from safecredit.envs.base import Env, EnvConfig, StepResult, Trajectory

DEFAULT_PARAMS = {
    "n_states": 8,
    "cost_states": [7],
    "reward_states": [7],
    "step_reward": 1.0,
}

BACK, STAY, FORWARD = 0, 1, 2
ACTION_VALUES = {BACK: -1.0, STAY: 0.0, FORWARD: 1.0}


def bin_action(value: float) -> int:
    if value < -1.0 / 3.0:
        return BACK
    if value > 1.0 / 3.0:
        return FORWARD
    return STAY


class ChainMdpEnv(Env):
    def __init__(self, config: EnvConfig):
        super().__init__(config)
        params = dict(DEFAULT_PARAMS)
        params.update(config.params)
        self.n_states = int(params["n_states"])
        self.cost_states = set(int(s) for s in params["cost_states"])
        self.reward_states = set(int(s) for s in params["reward_states"])
        self.step_reward = float(params["step_reward"])
        self._state = 0

    @property
    def obs_dim(self) -> int:
        return self.n_states

    @property
    def act_dim(self) -> int:
        return 1

    def geometry(self) -> dict:
        return {"n_states": self.n_states}

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._state = 0
        self._begin_episode()
        return self._observe()

    def step(self, action) -> StepResult:
        self._check_steppable()
        value = float(self._clip_action(action)[0])
        move = bin_action(value)
        if move == FORWARD:
            self._state = min(self._state + 1, self.n_states - 1)
        elif move == BACK:
            self._state = max(self._state - 1, 0)
        reward = self.step_reward if self._state in self.reward_states else 0.0
        cost = int(self._state in self.cost_states)
        self._t += 1
        done = self._t >= self.config.horizon
        self._done = done
        return StepResult(self._observe(), reward, cost, done, self._t - 1)

    def _observe(self) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[self._state] = 1.0
        return obs


def rollout_actions(env: ChainMdpEnv, moves, episode_id: str = "") -> Trajectory:
    """Run a fixed move sequence (ints in {BACK, STAY, FORWARD}) from reset."""
    obs = env.reset()
    observations, actions, rewards, costs = [], [], [], []
    for move in moves:
        value = ACTION_VALUES[int(move)]
        observations.append(obs)
        result = env.step([value])
        actions.append([value])
        rewards.append(result.reward)
        costs.append(result.true_cost)
        obs = result.obs
    return Trajectory(np.array(observations), np.array(actions),
                      np.array(rewards), np.array(costs), episode_id=episode_id)


def enumerate_trajectories(config: EnvConfig):
    """All 3^horizon trajectories; only feasible at short horizons."""
    env = ChainMdpEnv(config)
    if 3 ** config.horizon > 2_000_000:
        raise ValueError(f"horizon {config.horizon} too long to enumerate")
    for moves in itertools.product((BACK, STAY, FORWARD), repeat=config.horizon):
        yield moves, rollout_actions(env, moves)
