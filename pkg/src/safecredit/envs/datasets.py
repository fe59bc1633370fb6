"""Scripted-policy generation of labeled trajectory segments.

Pretraining data comes from cheap scripted controllers rather than an offline
corpus: biased random walks on the chain, ring followers with randomized
radius and speed on the point-mass task. Segments are labeled by the
trajectory-level oracle and balanced across classes.
"""

from __future__ import annotations

import numpy as np

from safecredit.envs.base import EnvConfig, Trajectory, true_label
from safecredit.envs.chain_mdp import (
    ACTION_VALUES,
    BACK,
    FORWARD,
    STAY,
    ChainMdpEnv,
)
from safecredit.envs.hazard_point import HazardPointEnv


def _collect_episode(env, policy, rng, episode_id: str) -> Trajectory:
    obs = env.reset(seed=int(rng.integers(1 << 31)))
    observations, actions, rewards, costs = [], [], [], []
    done = False
    while not done:
        action = policy(obs, rng)
        observations.append(obs)
        result = env.step(action)
        actions.append(np.asarray(action, dtype=np.float64).reshape(env.act_dim))
        rewards.append(result.reward)
        costs.append(result.true_cost)
        obs = result.obs
        done = result.done
    return Trajectory(np.array(observations), np.array(actions),
                      np.array(rewards), np.array(costs), episode_id=episode_id)


def _biased_walk_policy(rng):
    p_forward = rng.uniform(0.25, 0.95)
    p_back = (1.0 - p_forward) * rng.uniform(0.2, 0.8)

    def policy(obs, rng):
        u = rng.random()
        if u < p_forward:
            move = FORWARD
        elif u < p_forward + p_back:
            move = BACK
        else:
            move = STAY
        return [ACTION_VALUES[move]]

    return policy


def _ring_follower_policy(rng, ring_radius: float):
    target_radius = ring_radius * rng.uniform(0.6, 1.45)
    speed = rng.uniform(0.6, 1.6)
    noise = rng.uniform(0.0, 0.25)

    def policy(obs, rng):
        x, y, vx, vy = obs
        r = max(np.hypot(x, y), 1e-6)
        radial = np.array([x / r, y / r])
        tangent = np.array([-y / r, x / r])
        v_des = speed * tangent + 2.0 * (target_radius - r) * radial
        accel = 2.0 * (v_des - np.array([vx, vy]))
        accel = accel + noise * rng.standard_normal(2)
        return np.clip(accel, -1.0, 1.0)

    return policy


def _random_drift_policy(rng):
    scale = rng.uniform(0.3, 1.0)

    def policy(obs, rng):
        return np.clip(scale * rng.standard_normal(2), -1.0, 1.0)

    return policy


def _hazard_policy_mix(rng, ring_radius: float):
    # Mostly ring followers (they produce both labels), a slice of aimless
    # drifting so scores stay calibrated off the racing line too.
    if rng.random() < 0.3:
        return _random_drift_policy(rng)
    return _ring_follower_policy(rng, ring_radius)


def _slice_segment(traj: Trajectory, rng, min_len: int) -> Trajectory:
    if len(traj) <= min_len:
        return traj
    length = int(rng.integers(min_len, len(traj) + 1))
    start = int(rng.integers(0, len(traj) - length + 1))
    return traj.slice(traj.t_start + start, traj.t_start + start + length - 1)


def _family_slices(traj: Trajectory, rng, min_len: int, family_size: int):
    """Segments sharing one start with staggered ends.

    Families of nested prefixes pin down how a segment's total score splits
    across steps: the label can only flip between two ends that straddle the
    budget crossing, which is what localizes credit near the crossing. The
    start stays in the first half so the ends have room to straddle it.
    """
    if len(traj) <= min_len:
        return [traj]
    start = int(rng.integers(0, max(1, len(traj) // 2)))
    first_end = min(traj.t_start + start + min_len - 1, traj.t_end)
    choices = np.arange(first_end, traj.t_end + 1)
    k = min(family_size, len(choices))
    ends = np.sort(rng.choice(choices, size=k, replace=False))
    return [traj.slice(traj.t_start + start, int(t2)) for t2 in ends]


def generate_labeled_segments(config: EnvConfig, n_segments: int, seed: int,
                              balanced: bool = True, slice_fraction: float = 0.5,
                              min_segment_len: int = 10,
                              slice_mode: str = "window",
                              family_size: int = 3):
    """Roll scripted policies and return ``n_segments`` (segment, label) pairs.

    ``slice_fraction`` of the segments are sub-windows of an episode
    (exercising the variable-length labeling path); the rest are whole
    episodes. ``slice_mode="prefix_family"`` draws several segments per
    episode that share a start and differ in length, which sharpens credit
    localization when used as training data. With ``balanced`` the classes
    are forced to an even split, which can take many rollouts when one class
    is rare under the scripted policies.
    """
    if slice_mode not in ("window", "prefix_family"):
        raise ValueError(f"unknown slice_mode '{slice_mode}'")
    rng = np.random.default_rng(seed)
    if config.env_id == "chain_mdp":
        env = ChainMdpEnv(config)
        make_policy = lambda: _biased_walk_policy(rng)
    elif config.env_id == "hazard_point":
        env = HazardPointEnv(config)
        make_policy = lambda: _hazard_policy_mix(rng, env.ring_radius)
    else:
        raise ValueError(f"no scripted policies for env '{config.env_id}'")

    buckets = {0: [], 1: []}
    want = {0: n_segments // 2, 1: n_segments - n_segments // 2}
    episode = 0
    max_episodes = 200 * n_segments
    while True:
        if balanced and all(len(buckets[k]) >= want[k] for k in (0, 1)):
            break
        if not balanced and len(buckets[0]) + len(buckets[1]) >= n_segments:
            break
        if episode >= max_episodes:
            raise RuntimeError("scripted policies failed to produce both labels; "
                               "check env config (budget vs. horizon)")
        traj = _collect_episode(env, make_policy(), rng, episode_id=f"scripted-{seed}-{episode}")
        episode += 1
        segments = [traj]
        if rng.random() < slice_fraction:
            if slice_mode == "prefix_family":
                segments = _family_slices(traj, rng, min_segment_len, family_size)
            else:
                segments = [_slice_segment(traj, rng, min_segment_len)]
        for segment in segments:
            label = true_label(segment, config.budget)
            buckets[label].append((segment, label))

    if balanced:
        out = buckets[0][:want[0]] + buckets[1][:want[1]]
    else:
        out = (buckets[0] + buckets[1])[:n_segments]
    order = rng.permutation(len(out))
    return [out[i] for i in order]
