"""Point mass circling a ring, with hazard discs planted on the racing line.

The agent controls 2-D acceleration in [-1, 1]^2. Reward is angular progress
(counterclockwise momentum, discounted by distance from the ring), so the
greedy path hugs the ring and drives straight through the hazard discs;
staying within the cost budget requires swinging around them.
"""

from __future__ import annotations

import numpy as np

from safecredit.envs.base import Env, EnvConfig, StepResult

DEFAULT_PARAMS = {
    "ring_radius": 1.0,
    "dt": 0.1,
    "vel_damping": 0.9,
    "accel_gain": 0.2,
    "hazard_angles": [90.0, 210.0, 330.0],  # degrees on the ring
    "hazard_radius": 0.6,
    "reward_scale": 0.5,
    "start_angle_jitter": 0.3,        # radians, seeded uniform
}


class HazardPointEnv(Env):
    def __init__(self, config: EnvConfig):
        super().__init__(config)
        params = dict(DEFAULT_PARAMS)
        params.update(config.params)
        self.ring_radius = float(params["ring_radius"])
        self.dt = float(params["dt"])
        self.vel_damping = float(params["vel_damping"])
        self.accel_gain = float(params["accel_gain"])
        self.hazard_radius = float(params["hazard_radius"])
        self.reward_scale = float(params["reward_scale"])
        self.start_angle_jitter = float(params["start_angle_jitter"])
        angles = np.deg2rad(np.asarray(params["hazard_angles"], dtype=np.float64))
        self.hazard_centers = self.ring_radius * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1)
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)

    @property
    def obs_dim(self) -> int:
        return 4

    @property
    def act_dim(self) -> int:
        return 2

    def geometry(self) -> dict:
        """Static scene geometry for rendering (not the cost stream)."""
        return {
            "ring_radius": self.ring_radius,
            "hazards": [{"x": float(c[0]), "y": float(c[1]),
                         "r": self.hazard_radius} for c in self.hazard_centers],
        }

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed if seed is None else seed)
        angle = rng.uniform(-self.start_angle_jitter, self.start_angle_jitter)
        self._pos = self.ring_radius * np.array([np.cos(angle), np.sin(angle)])
        self._vel = np.zeros(2)
        self._begin_episode()
        return self._observe()

    def step(self, action) -> StepResult:
        self._check_steppable()
        accel = self._clip_action(action)
        self._vel = self.vel_damping * self._vel + self.accel_gain * accel
        self._pos = self._pos + self.dt * self._vel
        x, y = self._pos
        vx, vy = self._vel
        # Counterclockwise angular momentum, attenuated away from the ring.
        radial_err = abs(np.hypot(x, y) - self.ring_radius)
        reward = self.reward_scale * (x * vy - y * vx) / (1.0 + 3.0 * radial_err)
        cost = int(self._inside_hazard(self._pos))
        self._t += 1
        done = self._t >= self.config.horizon
        self._done = done
        return StepResult(self._observe(), float(reward), cost, done, self._t - 1)

    def _inside_hazard(self, pos: np.ndarray) -> bool:
        d = np.linalg.norm(self.hazard_centers - pos[None, :], axis=1)
        return bool(np.any(d <= self.hazard_radius))

    def _observe(self) -> np.ndarray:
        return np.concatenate([self._pos, self._vel])
