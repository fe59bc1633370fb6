import numpy as np
import pytest

from safecredit.envs import Trajectory
from safecredit.models import CbModel, bce_loss


def make_segment(rng, length, obs_dim=4, act_dim=2):
    return Trajectory(
        observations=rng.normal(size=(length, obs_dim)),
        actions=rng.uniform(-1, 1, size=(length, act_dim)),
        rewards=np.zeros(length),
        true_costs=np.zeros(length),
        episode_id="seg",
    )


def test_prob_half_when_budget_equals_cost_sum():
    rng = np.random.default_rng(0)
    model = CbModel(obs_dim=4, act_dim=2, seed=1)
    seg = make_segment(rng, 6)
    total = model.step_costs(seg.observations, seg.actions).sum()
    model.budget.data = np.array(total)
    assert model.prob_safe(seg) == pytest.approx(0.5)


def test_prob_saturates_with_large_margin():
    rng = np.random.default_rng(1)
    model = CbModel(obs_dim=4, act_dim=2, seed=2)
    seg = make_segment(rng, 6)
    total = model.step_costs(seg.observations, seg.actions).sum()
    model.budget.data = np.array(total + 25.0)
    assert model.prob_safe(seg) == pytest.approx(1.0 - 1.389e-11, abs=1e-12)
    assert 0.0 < model.prob_safe(seg) < 1.0


def test_costs_nonnegative_under_constrained_head():
    rng = np.random.default_rng(2)
    model = CbModel(obs_dim=4, act_dim=2, nonneg=True, seed=3)
    for _ in range(20):
        seg = make_segment(rng, int(rng.integers(1, 15)))
        assert np.all(model.step_costs(seg.observations, seg.actions) >= 0.0)


def test_budget_initialized_from_horizon():
    model = CbModel(obs_dim=2, act_dim=1, horizon=200)
    assert model.budget_estimate == pytest.approx(25.0)


def test_joint_shift_leaves_unconstrained_predictions_unchanged():
    # Adding k to the budget and k/T to every per-step cost cancels exactly
    # when the cost head is unconstrained: the model is unidentifiable along
    # this direction.
    rng = np.random.default_rng(3)
    model = CbModel(obs_dim=4, act_dim=2, nonneg=False, seed=4)
    length = 8
    batch = [(make_segment(rng, length), int(rng.integers(0, 2)))
             for _ in range(12)]
    base = bce_loss(model, batch).item()
    k = 3.0
    model.budget.data = model.budget.data + k
    model.out.bias.data = model.out.bias.data + k / length
    shifted = bce_loss(model, batch).item()
    assert abs(base - shifted) <= 1e-10


def test_joint_shift_not_exact_with_nonneg_head():
    rng = np.random.default_rng(4)
    model = CbModel(obs_dim=4, act_dim=2, nonneg=True, seed=5)
    length = 8
    batch = [(make_segment(rng, length), int(rng.integers(0, 2)))
             for _ in range(12)]
    base = bce_loss(model, batch).item()
    model.budget.data = model.budget.data + 3.0
    model.out.bias.data = model.out.bias.data + 3.0 / length
    shifted = bce_loss(model, batch).item()
    assert abs(base - shifted) > 1e-6


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    model = CbModel(obs_dim=4, act_dim=2, seed=6)
    seg = make_segment(rng, 5)
    before = model.prob_safe(seg)
    model.save(tmp_path / "cb.npz")
    loaded = CbModel.load(tmp_path / "cb.npz")
    assert loaded.prob_safe(seg) == before
