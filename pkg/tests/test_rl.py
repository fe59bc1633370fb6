import math

import numpy as np
import pytest

from safecredit.envs import EnvConfig, make_env
from safecredit.errors import UsageError
from safecredit.models import SsvModel
from safecredit.numerics import Tensor, evaluate_and_grad, mean
from safecredit.rl import (
    GaussianPolicy,
    LagrangianTrainer,
    TrainerConfig,
    constraint_limit,
    evaluate_policy,
    gae,
    pseudo_cost,
)
from safecredit.rl.trainer import RolloutError, discounted_budget_limit

from test_numerics import finite_diff_grads, max_rel_error


class TestGae:
    def test_single_step_episode_uses_zero_bootstrap(self):
        adv, target = gae([1.0], [0.4], [1.0], gamma=1.0, lam=1.0)
        assert adv[0] == pytest.approx(0.6)
        assert target[0] == pytest.approx(1.0)

    def test_zero_signals_zero_values(self):
        adv, target = gae(np.zeros(5), np.zeros(5), np.zeros(5), 0.99, 0.95)
        assert np.allclose(adv, 0.0)
        assert np.allclose(target, 0.0)

    def test_gamma_zero_reduces_to_td_residual(self):
        rng = np.random.default_rng(0)
        r, v = rng.normal(size=6), rng.normal(size=6)
        adv, _ = gae(r, v, np.zeros(6), gamma=0.0, lam=0.7)
        assert np.allclose(adv, r - v)

    def test_episode_boundary_blocks_propagation(self):
        # Two one-step episodes: each advantage only sees its own reward.
        adv, _ = gae([1.0, 2.0], [0.0, 0.0], [1.0, 1.0], gamma=0.9, lam=0.9)
        assert np.allclose(adv, [1.0, 2.0])

    def test_hand_rolled_two_step(self):
        gamma, lam = 0.9, 0.8
        r, v, d = [1.0, 2.0], [0.5, 0.25], [0.0, 1.0]
        delta1 = r[1] - v[1]
        delta0 = r[0] + gamma * v[1] - v[0]
        adv, _ = gae(r, v, d, gamma, lam)
        assert adv[1] == pytest.approx(delta1)
        assert adv[0] == pytest.approx(delta0 + gamma * lam * delta1)


class TestPseudoCost:
    def test_negation(self):
        assert pseudo_cost(-0.2) == pytest.approx(0.2)
        assert pseudo_cost(0.0) == 0.0

    def test_positive_rejected(self):
        with pytest.raises(UsageError):
            pseudo_cost(0.1)

    def test_limit_for_default_d(self):
        assert constraint_limit(0.9) == pytest.approx(0.10536051565782628)

    def test_discounted_budget_limit(self):
        assert discounted_budget_limit(25.0, 200, 1.0) == 25.0
        # (25/200) * (1 - 0.99^200) / 0.01
        assert discounted_budget_limit(25.0, 200, 0.99) == pytest.approx(10.8252540, rel=1e-6)


def chain_trainer(mode="oracle", seed=0, horizon=8, **cfg_kwargs):
    env = make_env(EnvConfig(env_id="chain_mdp", horizon=horizon, budget=3.0))
    ssv = None
    if mode == "ssv":
        ssv = SsvModel(obs_dim=env.obs_dim, act_dim=env.act_dim,
                       hidden_dim=8, head="distributional", seed=seed)
    cfg = TrainerConfig(mode=mode, rollout_steps=64, minibatch_size=32,
                        update_epochs=2, **cfg_kwargs)
    return LagrangianTrainer(env, cfg, seed=seed, ssv_model=ssv)


class TestRollout:
    def test_oracle_pseudo_costs_equal_true_costs(self):
        trainer = chain_trainer("oracle")
        batch = trainer.collect_rollout(40)
        assert np.array_equal(batch.pseudo_costs, batch.true_costs)

    def test_ssv_pseudo_costs_nonnegative(self):
        trainer = chain_trainer("ssv")
        batch = trainer.collect_rollout(40)
        assert np.all(batch.pseudo_costs >= 0.0)

    def test_summary_resets_at_episode_starts(self):
        trainer = chain_trainer("ssv", horizon=5)
        batch = trainer.collect_rollout(12)
        obs_dim = trainer.env.obs_dim
        starts = [0] + [i + 1 for i in range(11) if batch.dones[i] == 1.0]
        for start in starts:
            assert np.array_equal(batch.inputs[start, obs_dim:],
                                  np.zeros(trainer.hidden_dim))
        mid = [i for i in range(12) if i not in starts]
        assert any(np.any(batch.inputs[i, obs_dim:] != 0.0) for i in mid)

    def test_episodes_complete_and_consistent(self):
        trainer = chain_trainer("oracle", horizon=5)
        batch = trainer.collect_rollout(17)
        assert len(batch.episodes) == 3  # 17 steps, horizon 5, one partial left
        for ep in batch.episodes:
            assert len(ep) == 5
        assert len(batch.episode_disc_costs) == 3

    def test_env_fault_raises_rollout_error(self):
        trainer = chain_trainer("oracle")

        class Boom(Exception):
            pass

        original = trainer.env.step
        calls = {"n": 0}

        def flaky(action):
            if calls["n"] == 7:
                raise Boom("sensor died")
            calls["n"] += 1
            return original(action)

        trainer.env.step = flaky
        with pytest.raises(RolloutError) as err:
            trainer.collect_rollout(20)
        assert err.value.steps_collected == 7

    def test_jensen_gap_nonnegative(self):
        trainer = chain_trainer("ssv", horizon=5)
        batch = trainer.collect_rollout(25)
        diag = trainer.update(batch)
        assert diag["jensen_gap"] >= -1e-12


class TestLambdaUpdate:
    def test_stays_at_zero_below_limit(self):
        trainer = chain_trainer("ssv")
        batch = trainer.collect_rollout(32)
        batch.episode_disc_costs = [0.05]
        trainer.update(batch)
        assert trainer.lambda_ == 0.0

    def test_single_projected_step(self):
        trainer = chain_trainer("ssv", eta_lambda=0.1)
        batch = trainer.collect_rollout(32)
        batch.episode_disc_costs = [0.2]
        trainer.update(batch)
        assert trainer.lambda_ == pytest.approx(0.009463948434217374)

    def test_never_negative_across_updates(self):
        trainer = chain_trainer("ssv", eta_lambda=0.5)
        for cost in (0.0, 1.0, 0.0, 0.0, 2.0, 0.0):
            batch = trainer.collect_rollout(32)
            batch.episode_disc_costs = [cost]
            trainer.update(batch)
            assert trainer.lambda_ >= 0.0

    def test_formulations_agree_bitwise(self):
        # The dual step on discounted pseudo-costs equals the dual step on the
        # (negated) discounted log-score sum, bit for bit.
        trainer = chain_trainer("ssv", horizon=5, eta_lambda=0.05)
        batch = trainer.collect_rollout(30)
        gamma = trainer.cfg.gamma
        score_sums, cost_sums = [], []
        start = 0
        for i, done in enumerate(batch.dones):
            if done == 1.0:
                costs = batch.pseudo_costs[start:i + 1]
                weights = gamma ** np.arange(len(costs))
                cost_sums.append(np.sum(weights * costs))
                score_sums.append(np.sum(weights * (-costs)))
                start = i + 1
        limit = constraint_limit(trainer.cfg.d)
        j_c = np.mean(cost_sums)
        mean_log = np.mean(score_sums)
        via_costs = max(0.0, 0.3 + 0.05 * (j_c - limit))
        via_scores = max(0.0, 0.3 + 0.05 * ((-mean_log) - limit))
        assert via_costs == via_scores

    def test_lambda_zero_matches_unconstrained_ppo(self):
        # With the multiplier at zero the cost stream must not touch the
        # policy update at all.
        results = []
        for fake_costs in (False, True):
            trainer = chain_trainer("oracle", seed=3)
            batch = trainer.collect_rollout(64)
            if fake_costs:
                batch.pseudo_costs = batch.pseudo_costs * 3.0 + 0.1
            batch.episode_disc_costs = [0.0]  # keeps lambda at zero
            trainer.update(batch)
            results.append([p.data.copy() for p in trainer.policy.parameters()])
        for a, b in zip(*results):
            assert np.array_equal(a, b)


class TestPolicy:
    def test_log_density_graph_matches_fast(self):
        rng = np.random.default_rng(0)
        policy = GaussianPolicy(rng, input_dim=3, act_dim=2)
        inputs = rng.normal(size=(6, 3))
        actions = rng.normal(size=(6, 2))
        fast = policy.log_density(inputs, actions)
        graph = policy.log_density_graph(inputs, actions).data[:, 0]
        assert np.allclose(fast, graph, rtol=1e-12, atol=1e-12)

    def test_log_density_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        policy = GaussianPolicy(rng, input_dim=3, act_dim=2, hidden=(8,))
        inputs = rng.normal(size=(4, 3))
        actions = rng.normal(size=(4, 2))
        params = policy.parameters()
        loss = mean(policy.log_density_graph(inputs, actions))
        _, analytic = evaluate_and_grad(loss, params)
        numeric = finite_diff_grads(
            lambda: mean(policy.log_density_graph(inputs, actions)).item(), params)
        assert max_rel_error(analytic, numeric) < 1e-4

    def test_log_std_stays_clamped_in_density(self):
        rng = np.random.default_rng(2)
        policy = GaussianPolicy(rng, input_dim=2, act_dim=1, log_std_init=-0.5)
        policy.log_std.data = np.array([-20.0])
        # density computed with std = exp(-5), not exp(-20)
        val = policy.log_density(np.zeros((1, 2)), np.zeros((1, 1)))[0]
        expected = -0.5 * np.log(2 * np.pi) + 5.0
        assert val == pytest.approx(expected)


class TestEvaluate:
    def test_deterministic(self):
        trainer = chain_trainer("oracle", horizon=6)
        env = make_env(EnvConfig(env_id="chain_mdp", horizon=6, budget=3.0))
        a = evaluate_policy(trainer.policy, env, n_episodes=5, seed_base=50)
        b = evaluate_policy(trainer.policy, env, n_episodes=5, seed_base=50)
        assert a == b

    def test_fraction_safe_definition(self):
        trainer = chain_trainer("oracle", horizon=6)
        env = make_env(EnvConfig(env_id="chain_mdp", horizon=6, budget=3.0))
        metrics = evaluate_policy(trainer.policy, env, n_episodes=8, seed_base=1)
        assert 0.0 <= metrics["fraction_safe"] <= 1.0
        assert metrics["n_episodes"] == 8

    def test_labeled_count_passthrough(self):
        trainer = chain_trainer("oracle", horizon=6)
        env = make_env(EnvConfig(env_id="chain_mdp", horizon=6, budget=3.0))
        metrics = evaluate_policy(trainer.policy, env, n_episodes=2,
                                  seed_base=1, labeled_count=17)
        assert metrics["labeled_trajectories"] == 17


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def test_rollout_cost_estimate_matches_enumeration():
    # Exact discounted-cost expectation by enumerating every action sequence
    # against the policy's move probabilities, vs. the Monte Carlo estimate
    # from rollouts of the same frozen policy. Cost sits on a frequently
    # visited state so the 10% band is many standard errors wide.
    horizon = 6
    env_cfg = EnvConfig(env_id="chain_mdp", horizon=horizon, budget=3.0,
                        params={"n_states": 4, "cost_states": [1],
                                "reward_states": [3]})
    env = make_env(env_cfg)
    cfg = TrainerConfig(mode="oracle", rollout_steps=30000, minibatch_size=64,
                        update_epochs=1, gamma=0.95)
    trainer = LagrangianTrainer(env, cfg, seed=11)

    std = float(np.exp(np.clip(trainer.policy.log_std.data[0], -5, 2)))

    def move_probs(obs):
        mu = trainer.policy.mean_action(obs)[0]
        p_back = normal_cdf((-1.0 / 3.0 - mu) / std)
        p_fwd = 1.0 - normal_cdf((1.0 / 3.0 - mu) / std)
        return {0: p_back, 1: 1.0 - p_back - p_fwd, 2: p_fwd}

    import itertools
    from safecredit.envs.chain_mdp import rollout_actions

    exact = 0.0
    probe_env = make_env(env_cfg)
    for moves in itertools.product((0, 1, 2), repeat=horizon):
        traj = rollout_actions(probe_env, moves)
        prob = 1.0
        for t in range(horizon):
            prob *= move_probs(traj.observations[t])[moves[t]]
        disc_cost = sum(c * cfg.gamma ** t for t, c in enumerate(traj.true_costs))
        exact += prob * disc_cost

    batch = trainer.collect_rollout()
    estimate = batch.mean_episode_cost()
    assert estimate == pytest.approx(exact, rel=0.10)
