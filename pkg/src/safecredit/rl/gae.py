"""Generalized advantage estimation over flattened multi-episode rollouts."""

from __future__ import annotations

import numpy as np

from safecredit.numerics import ShapeError


def gae(signals: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float, bootstrap_value: float = 0.0):
    """Advantages and regression targets for one signal stream.

    ``dones[t]`` marks the last step of an episode; the recursion does not
    leak across boundaries. ``bootstrap_value`` is the value estimate of the
    state following the final step, used only when the rollout ends
    mid-episode. Targets are advantages + values.
    """
    signals = np.asarray(signals, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (len(signals) == len(values) == len(dones)):
        raise ShapeError("gae inputs must share length")
    n = len(signals)
    advantages = np.zeros(n)
    next_value = bootstrap_value
    next_advantage = 0.0
    for t in range(n - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = signals[t] + gamma * next_value * not_done - values[t]
        advantages[t] = delta + gamma * lam * not_done * next_advantage
        next_value = values[t]
        next_advantage = advantages[t]
    return advantages, advantages + values
