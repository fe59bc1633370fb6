"""PPO with a Lagrangian constraint on the learned safety signal.

Three constraint modes share one update rule and differ only in where the
per-step pseudo-cost and the constraint limit come from:

- ``ssv``: pseudo-cost is the negated per-step log safety score from a frozen
  recurrent constraint model; the limit is -log d. The policy and critics see
  the observation concatenated with the model's summary vector.
- ``cb``: pseudo-cost is the cost head of the cost+budget model; the limit is
  its learned budget converted to a discounted-sum equivalent.
- ``oracle``: pseudo-cost is the environment's true binary cost with the true
  budget (the known-constraint reference).

The dual update is lambda <- max(0, lambda + eta (J_c - limit)) with J_c the
mean discounted pseudo-cost over completed episodes, and the policy ascends
the clipped surrogate of (A_R - lambda A_c) / (1 + lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from safecredit.envs.base import Env, Trajectory
from safecredit.errors import ConfigError, UsageError
from safecredit.numerics import (
    Adam,
    NumericError,
    Tensor,
    add,
    clip,
    evaluate_and_grad,
    exp,
    mean,
    mul,
    neg,
    sub,
)
from safecredit.rl.gae import gae
from safecredit.rl.policy import GaussianPolicy, ValueNet

MODES = ("ssv", "cb", "oracle")


class RolloutError(RuntimeError):
    """Environment fault mid-rollout; carries the partial step count."""

    def __init__(self, message: str, steps_collected: int):
        super().__init__(message)
        self.steps_collected = steps_collected


def pseudo_cost(log_score: float) -> float:
    """Per-step surrogate cost: the negated log safety score."""
    if log_score > 0.0:
        raise UsageError(f"log safety score must be <= 0, got {log_score}")
    return -log_score


def constraint_limit(d: float) -> float:
    """Discounted pseudo-cost limit equivalent to a safe-fraction target d."""
    if not (0.0 < d <= 1.0):
        raise ConfigError("d must lie in (0, 1]")
    return -float(np.log(d))


def discounted_budget_limit(budget: float, horizon: int, gamma: float) -> float:
    """An undiscounted budget spread over the horizon, then discounted.

    budget/T per step summed with discounting: (budget/T)(1-gamma^T)/(1-gamma).
    """
    if gamma >= 1.0:
        return float(budget)
    rate = budget / horizon
    return float(rate * (1.0 - gamma ** horizon) / (1.0 - gamma))


@dataclass
class TrainerConfig:
    mode: str = "ssv"
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    rollout_steps: int = 4096
    update_epochs: int = 4
    minibatch_size: int = 256
    policy_lr: float = 3e-4
    value_lr: float = 1e-3
    eta_lambda: float = 0.05
    d: float = 0.9
    hidden: tuple = (64, 64)
    log_std_init: float = -0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")


@dataclass
class RolloutBatch:
    inputs: np.ndarray         # (N, input_dim) policy/critic inputs
    actions: np.ndarray        # (N, act_dim), pre-clip samples
    log_densities: np.ndarray  # (N,)
    rewards: np.ndarray        # (N,)
    pseudo_costs: np.ndarray   # (N,), >= 0 in ssv mode
    true_costs: np.ndarray     # (N,)
    dones: np.ndarray          # (N,)
    v_reward: np.ndarray       # (N,)
    v_cost: np.ndarray         # (N,)
    bootstrap_reward: float
    bootstrap_cost: float
    episodes: list             # completed Trajectory objects
    episode_disc_costs: list   # discounted pseudo-cost sum per completed episode
    episode_log_scores: list   # undiscounted sum of log scores (ssv mode)

    def mean_episode_cost(self) -> float:
        """J_c estimate: mean discounted pseudo-cost over completed episodes."""
        if not self.episode_disc_costs:
            return float("nan")
        return float(np.mean(self.episode_disc_costs))


class LagrangianTrainer:
    """Owns the policy, critics, multiplier, and one training environment."""

    def __init__(self, env: Env, config: TrainerConfig, seed: int = 0,
                 ssv_model=None, cb_model=None):
        self.env = env
        self.cfg = config
        self.rng = np.random.default_rng(seed)
        self.mode = config.mode
        if self.mode == "ssv" and ssv_model is None:
            raise ConfigError("ssv mode needs a constraint model")
        if self.mode == "cb" and cb_model is None:
            raise ConfigError("cb mode needs a cost+budget model")
        self.ssv = ssv_model
        self.cb = cb_model
        self.hidden_dim = ssv_model.hidden_dim if ssv_model is not None else 0
        self.input_dim = env.obs_dim + self.hidden_dim
        net_rng = np.random.default_rng(seed + 1)
        self.policy = GaussianPolicy(net_rng, self.input_dim, env.act_dim,
                                     hidden=config.hidden,
                                     log_std_init=config.log_std_init)
        self.v_reward = ValueNet(net_rng, self.input_dim, config.hidden, name="v_r")
        self.v_cost = ValueNet(net_rng, self.input_dim, config.hidden, name="v_c")
        self.opt_policy = Adam(self.policy.parameters(), lr=config.policy_lr)
        self.opt_vr = Adam(self.v_reward.parameters(), lr=config.value_lr)
        self.opt_vc = Adam(self.v_cost.parameters(), lr=config.value_lr)
        self.lambda_ = 0.0
        self.total_env_steps = 0
        self._episode_counter = 0
        self._obs = None
        self._h = None
        self._ep_steps: list = []

    # ---- constraint plumbing ---------------------------------------------

    @property
    def limit(self) -> float:
        if self.mode == "ssv":
            return constraint_limit(self.cfg.d)
        budget = (self.cb.budget_estimate if self.mode == "cb"
                  else self.env.config.budget)
        return discounted_budget_limit(budget, self.env.config.horizon,
                                       self.cfg.gamma)

    def _policy_input(self, obs: np.ndarray) -> np.ndarray:
        if self.mode == "ssv":
            return np.concatenate([obs, self._h])
        return obs

    def _step_pseudo_cost(self, obs, exec_action, true_cost) -> float:
        """Advance the summary vector (ssv mode) and emit this step's cost."""
        if self.mode == "ssv":
            h_next = self.ssv.step(self._h, obs, exec_action)
            if self.ssv.head == "distributional":
                mu, sigma = self.ssv.decode_dist(self._h, h_next)
                score = -float(np.exp(min(mu + 0.5 * sigma * sigma, 30.0)))
            else:
                score = self.ssv.decode(self._h, h_next)
            self._h = h_next
            return pseudo_cost(score)
        if self.mode == "cb":
            return float(self.cb.step_costs(obs[None, :], exec_action[None, :])[0])
        return float(true_cost)

    # ---- rollout -----------------------------------------------------------

    def _begin_episode(self):
        self._obs = self.env.reset(seed=int(self.rng.integers(1 << 31)))
        self._h = self.ssv.initial_summary() if self.mode == "ssv" else None
        self._ep_steps = []
        self._episode_counter += 1

    def collect_rollout(self, n_steps: int | None = None) -> RolloutBatch:
        """Run the frozen policy/constraint snapshots for n environment steps.

        The training env persists across calls; an episode cut by the batch
        boundary is finished in the next rollout and reported there.
        """
        n = self.cfg.rollout_steps if n_steps is None else n_steps
        if self._obs is None:
            self._begin_episode()
        inputs = np.empty((n, self.input_dim))
        actions = np.empty((n, self.env.act_dim))
        log_densities = np.empty(n)
        rewards = np.empty(n)
        pseudo_costs = np.empty(n)
        true_costs = np.empty(n)
        dones = np.empty(n)
        episodes, episode_disc_costs, episode_log_scores = [], [], []
        ep_costs: list = []
        for existing in self._ep_steps:
            ep_costs.append(existing["pseudo_cost"])
        for i in range(n):
            policy_in = self._policy_input(self._obs)
            action, logp = self.policy.act(policy_in, self.rng)
            try:
                result = self.env.step(action)
            except Exception as error:  # env fault: surface the partial batch
                raise RolloutError(f"environment fault at step {i}: {error}", i) from error
            exec_action = np.clip(action, self.env.action_low, self.env.action_high)
            c_tilde = self._step_pseudo_cost(self._obs, exec_action, result.true_cost)
            inputs[i] = policy_in
            actions[i] = action
            log_densities[i] = logp
            rewards[i] = result.reward
            pseudo_costs[i] = c_tilde
            true_costs[i] = result.true_cost
            dones[i] = float(result.done)
            self._ep_steps.append({
                "obs": self._obs, "action": exec_action,
                "reward": result.reward, "true_cost": result.true_cost,
                "pseudo_cost": c_tilde,
            })
            ep_costs.append(c_tilde)
            self.total_env_steps += 1
            self._obs = result.obs
            if result.done:
                episodes.append(self._finish_episode())
                disc = sum(c * self.cfg.gamma ** t for t, c in enumerate(ep_costs))
                episode_disc_costs.append(float(disc))
                if self.mode == "ssv":
                    episode_log_scores.append(float(-np.sum(ep_costs)))
                ep_costs = []
                self._begin_episode()
        last_input = self._policy_input(self._obs)
        mid_episode = len(self._ep_steps) > 0
        bootstrap_r = float(self.v_reward.predict(last_input)[0]) if mid_episode else 0.0
        bootstrap_c = float(self.v_cost.predict(last_input)[0]) if mid_episode else 0.0
        return RolloutBatch(
            inputs=inputs, actions=actions, log_densities=log_densities,
            rewards=rewards, pseudo_costs=pseudo_costs, true_costs=true_costs,
            dones=dones,
            v_reward=self.v_reward.predict(inputs),
            v_cost=self.v_cost.predict(inputs),
            bootstrap_reward=bootstrap_r, bootstrap_cost=bootstrap_c,
            episodes=episodes, episode_disc_costs=episode_disc_costs,
            episode_log_scores=episode_log_scores,
        )

    def _finish_episode(self) -> Trajectory:
        steps = self._ep_steps
        traj = Trajectory(
            observations=np.array([s["obs"] for s in steps]),
            actions=np.array([s["action"] for s in steps]),
            rewards=np.array([s["reward"] for s in steps]),
            true_costs=np.array([s["true_cost"] for s in steps]),
            episode_id=f"train-{self._episode_counter}",
        )
        self._ep_steps = []
        return traj

    # ---- update ------------------------------------------------------------

    def update(self, batch: RolloutBatch) -> dict:
        """One dual step on lambda, then clipped-surrogate epochs on the batch."""
        cfg = self.cfg
        limit = self.limit
        j_c = batch.mean_episode_cost()
        if np.isfinite(j_c):
            self.lambda_ = max(0.0, self.lambda_ + cfg.eta_lambda * (j_c - limit))

        adv_r, target_r = gae(batch.rewards, batch.v_reward, batch.dones,
                              cfg.gamma, cfg.gae_lambda, batch.bootstrap_reward)
        adv_c, target_c = gae(batch.pseudo_costs, batch.v_cost, batch.dones,
                              cfg.gamma, cfg.gae_lambda, batch.bootstrap_cost)
        adv_r = _normalize(adv_r)
        adv_c = _normalize(adv_c)
        combined = (adv_r - self.lambda_ * adv_c) / (1.0 + self.lambda_)

        snapshot = [p.data.copy() for p in self._all_parameters()]
        diag = {"lambda": self.lambda_, "j_c": j_c, "limit": limit,
                "aborted": False}
        try:
            losses = self._run_epochs(batch, combined, target_r, target_c)
            diag.update(losses)
        except NumericError as error:
            for p, saved in zip(self._all_parameters(), snapshot):
                p.data = saved
            diag["aborted"] = True
            diag["abort_reason"] = str(error)
        diag["mean_episode_reward"] = (
            float(np.mean([ep.rewards.sum() for ep in batch.episodes]))
            if batch.episodes else float("nan"))
        diag["mean_episode_true_cost"] = (
            float(np.mean([ep.total_true_cost for ep in batch.episodes]))
            if batch.episodes else float("nan"))
        if batch.episode_log_scores:
            sums = np.array(batch.episode_log_scores)
            lse = float(np.logaddexp.reduce(sums) - np.log(len(sums)))
            diag["jensen_gap"] = lse - float(np.mean(sums))
        return diag

    def _all_parameters(self):
        return (self.policy.parameters() + self.v_reward.parameters()
                + self.v_cost.parameters())

    def _run_epochs(self, batch, combined_adv, target_r, target_c) -> dict:
        cfg = self.cfg
        n = len(combined_adv)
        policy_losses, vr_losses, vc_losses = [], [], []
        for _ in range(cfg.update_epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                policy_losses.append(self._policy_step(batch, idx, combined_adv))
                vr_losses.append(self._value_step(
                    self.v_reward, self.opt_vr, batch.inputs[idx], target_r[idx]))
                vc_losses.append(self._value_step(
                    self.v_cost, self.opt_vc, batch.inputs[idx], target_c[idx]))
        return {"policy_loss": float(np.mean(policy_losses)),
                "v_reward_loss": float(np.mean(vr_losses)),
                "v_cost_loss": float(np.mean(vc_losses))}

    def _policy_step(self, batch, idx, combined_adv) -> float:
        cfg = self.cfg
        logp_new = self.policy.log_density_graph(batch.inputs[idx],
                                                 batch.actions[idx])
        ratio = exp(sub(logp_new, Tensor(batch.log_densities[idx][:, None])))
        adv = Tensor(combined_adv[idx][:, None])
        raw = mul(ratio, adv)
        clipped = mul(clip(ratio, lo=1.0 - cfg.clip_ratio,
                           hi=1.0 + cfg.clip_ratio), adv)
        # min(a, b) = b + clip(a - b, hi=0)
        surrogate = add(clipped, clip(sub(raw, clipped), hi=0.0))
        loss = neg(mean(surrogate))
        value, grads = evaluate_and_grad(loss, self.policy.parameters())
        self.opt_policy.step(grads)
        return value

    def _value_step(self, net, opt, inputs, targets) -> float:
        pred = net.predict_graph(inputs)
        err = sub(pred, Tensor(targets[:, None]))
        loss = mean(mul(err, err))
        value, grads = evaluate_and_grad(loss, net.parameters())
        opt.step(grads)
        return value

    # ---- persistence --------------------------------------------------------

    def save_policy(self, path) -> None:
        self.policy.save(path, extra_meta={
            "mode": self.mode, "lambda": self.lambda_,
            "hidden_dim": self.hidden_dim,
        })


def _normalize(values: np.ndarray) -> np.ndarray:
    return (values - values.mean()) / (values.std() + 1e-8)


def evaluate_policy(policy: GaussianPolicy, env: Env, n_episodes: int = 100,
                    seed_base: int = 10_000, ssv_model=None,
                    labeled_count: int | None = None) -> dict:
    """Deterministic (mean-action) evaluation on an independently seeded env.

    Ground-truth costs are read here for metrics only; they never reach the
    policy or the constraint model.
    """
    budget = env.config.budget
    rewards, costs = [], []
    for episode in range(n_episodes):
        obs = env.reset(seed=seed_base + episode)
        h = ssv_model.initial_summary() if ssv_model is not None else None
        total_r, total_c, done = 0.0, 0.0, False
        while not done:
            inputs = obs if h is None else np.concatenate([obs, h])
            action = policy.mean_action(inputs)
            result = env.step(action)
            if h is not None:
                exec_action = np.clip(action, env.action_low, env.action_high)
                h = ssv_model.step(h, obs, exec_action)
            total_r += result.reward
            total_c += result.true_cost
            obs = result.obs
            done = result.done
        rewards.append(total_r)
        costs.append(total_c)
    metrics = {
        "n_episodes": n_episodes,
        "mean_reward": float(np.mean(rewards)) if rewards else float("nan"),
        "mean_true_cost": float(np.mean(costs)) if costs else float("nan"),
        "fraction_safe": float(np.mean([c <= budget for c in costs]))
        if costs else float("nan"),
    }
    if labeled_count is not None:
        metrics["labeled_trajectories"] = int(labeled_count)
    return metrics
