import threading

import numpy as np
import pytest

from safecredit.continual import (
    CvEstimate,
    FeedbackBuffer,
    cv_score,
    retrain,
)
from safecredit.envs import EnvConfig, Trajectory, true_label
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.errors import UsageError
from safecredit.models import SsvModel, train_model
from safecredit.models.ssv import neg_lognormal_moments
from safecredit.models.training import holdout_accuracy


def make_segment(rng, length=6, obs_dim=3, act_dim=1, costs=None):
    return Trajectory(
        observations=rng.normal(size=(length, obs_dim)),
        actions=rng.uniform(-1, 1, size=(length, act_dim)),
        rewards=np.zeros(length),
        true_costs=np.zeros(length) if costs is None else np.asarray(costs, float),
        episode_id="seg",
    )


class TestCvEstimate:
    def test_zero_variance_gives_zero_cv(self):
        est = CvEstimate(mean=-2.0, variance=0.0)
        assert est.cv == 0.0

    def test_single_step_closed_form(self):
        # mu=0, sigma^2=ln 2: mean -sqrt(2), variance 2, CV exactly 1.
        mean, var = neg_lognormal_moments(0.0, np.sqrt(np.log(2.0)))
        est = CvEstimate(mean=float(mean), variance=float(var))
        assert est.cv == pytest.approx(1.0, rel=1e-12)

    def test_cv_grows_when_sigma_scales_up_at_fixed_mean(self):
        mu, sigma = -0.3, 0.4
        base_mean, base_var = neg_lognormal_moments(mu, sigma)
        for scale in (1.5, 2.0, 4.0):
            sigma2 = scale * sigma
            # keep the per-step mean fixed: mu' = mu + (sigma^2 - sigma'^2)/2
            mu2 = mu + 0.5 * (sigma ** 2 - sigma2 ** 2)
            mean2, var2 = neg_lognormal_moments(mu2, sigma2)
            assert mean2 == pytest.approx(base_mean, rel=1e-12)
            assert CvEstimate(float(mean2), float(var2)).cv > CvEstimate(
                float(base_mean), float(base_var)).cv

    def test_wrong_head_rejected(self):
        model = SsvModel(obs_dim=3, act_dim=1, hidden_dim=4, head="deterministic")
        rng = np.random.default_rng(0)
        with pytest.raises(UsageError):
            cv_score(model, make_segment(rng))

    def test_closed_form_matches_monte_carlo(self):
        model = SsvModel(obs_dim=3, act_dim=1, hidden_dim=8,
                         head="distributional", seed=3)
        rng = np.random.default_rng(1)
        segment = make_segment(rng, length=10)
        est = cv_score(model, segment)
        mus, sigmas = model.step_moments(segment.observations, segment.actions)
        draws = -np.exp(mus[:, None] + sigmas[:, None]
                        * rng.standard_normal((len(mus), 100_000)))
        totals = draws.sum(axis=0)
        mc_cv = totals.std() / abs(totals.mean())
        assert est.cv == pytest.approx(mc_cv, rel=0.02)
        assert est.variance >= 0.0


class TestBufferQueue:
    def test_selection_order_and_bounds(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(2)
        for cv in (0.1, 0.9, 0.5):
            buffer.enqueue(make_segment(rng), cv=cv)
        assert buffer.select_for_labeling(0) == []
        chosen = buffer.select_for_labeling(2)
        assert [c.cv for c in chosen] == [0.9, 0.5]
        rest = buffer.select_for_labeling(5)  # k > queue size: takes the rest
        assert [c.cv for c in rest] == [0.1]

    def test_ties_break_by_ascending_id(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(3)
        ids = [buffer.enqueue(make_segment(rng), cv=0.7) for _ in range(3)]
        chosen = buffer.select_for_labeling(2)
        assert [c.segment_id for c in chosen] == ids[:2]

    def test_oracle_tick_labels_all_selected(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(4)
        for i in range(5):
            buffer.enqueue(make_segment(rng, costs=[1.0] * 6), cv=float(i))
        buffer.select_for_labeling(5)
        n = buffer.labeling_tick(oracle=lambda traj: true_label(traj, budget=3.0))
        assert n == 5
        assert buffer.labeled_total == 5
        assert all(label == 0 for _, label in buffer.fresh_pairs())

    def test_human_tick_without_submissions(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(5)
        buffer.enqueue(make_segment(rng), cv=0.5)
        buffer.select_for_labeling(1)
        assert buffer.labeling_tick() == 0
        assert buffer.labeled_total == 0

    def test_duplicate_label_rejected(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(6)
        sid = buffer.enqueue(make_segment(rng), cv=0.5)
        buffer.select_for_labeling(1)
        buffer.apply_label(sid, 1, provenance="human")
        with pytest.raises(UsageError):
            buffer.apply_label(sid, 0, provenance="human")

    def test_unknown_segment_and_bad_label(self):
        buffer = FeedbackBuffer()
        with pytest.raises(KeyError):
            buffer.apply_label(99, 1, provenance="human")
        rng = np.random.default_rng(7)
        sid = buffer.enqueue(make_segment(rng), cv=0.5)
        with pytest.raises(UsageError):
            buffer.apply_label(sid, 2, provenance="human")

    def test_cumulative_count_sums_ticks(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(8)
        total = 0
        for round_ in range(3):
            for _ in range(round_ + 1):
                buffer.enqueue(make_segment(rng), cv=0.5)
            buffer.select_for_labeling(round_ + 1)
            total += buffer.labeling_tick(oracle=lambda t: 1)
        assert buffer.labeled_total == total == 6

    def test_expire_pending(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(9)
        buffer.enqueue(make_segment(rng), cv=0.2)
        sid = buffer.enqueue(make_segment(rng), cv=0.9)
        buffer.select_for_labeling(1)
        assert buffer.expire_pending() == 1
        assert buffer.pending() == []
        # the selected one is still labelable, the expired one is not
        buffer.apply_label(sid, 1, provenance="human")
        expired_id = 0
        with pytest.raises(UsageError):
            buffer.apply_label(expired_id, 1, provenance="human")

    def test_concurrent_enqueue_ids_unique(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(10)
        segment = make_segment(rng)
        ids = []

        def worker():
            for _ in range(50):
                ids.append(buffer.enqueue(segment, cv=0.1))

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(ids)) == 200


class TestRetrain:
    def test_empty_fresh_is_noop(self):
        buffer = FeedbackBuffer()
        model = SsvModel(obs_dim=3, act_dim=1, hidden_dim=4)
        before = [p.data.copy() for p in model.parameters()]
        report = retrain(model, buffer, epochs=3)
        assert "skipped" in report.notes[0]
        for old, new in zip(before, model.parameters()):
            assert np.array_equal(old, new.data)

    def test_rehearsal_with_empty_pool_flags_and_trains(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(11)
        sid = buffer.enqueue(make_segment(rng), cv=0.5)
        buffer.select_for_labeling(1)
        buffer.apply_label(sid, 1, provenance="human")
        buffer.labeling_tick()
        model = SsvModel(obs_dim=3, act_dim=1, hidden_dim=4)
        report = retrain(model, buffer, rehearsal_fraction=1.0, epochs=1,
                         holdout_fraction=0.0)
        assert any("pool is empty" in note for note in report.notes)
        assert report.epochs_run == 1

    def test_fresh_drains_into_rehearsal_pool(self):
        buffer = FeedbackBuffer()
        rng = np.random.default_rng(12)
        buffer.seed_pretraining([(make_segment(rng), 1), (make_segment(rng), 0)])
        sid = buffer.enqueue(make_segment(rng), cv=0.5)
        buffer.select_for_labeling(1)
        buffer.apply_label(sid, 0, provenance="human")
        buffer.labeling_tick()
        model = SsvModel(obs_dim=3, act_dim=1, hidden_dim=4)
        retrain(model, buffer, rehearsal_fraction=0.5, epochs=1,
                holdout_fraction=0.0)
        counts = buffer.counts()
        assert counts["fresh"] == 0
        assert counts["pretraining"] == 3

    def test_shifted_distribution_keeps_both_accuracies(self):
        # Old data: random sub-windows of biased walks. New data: whole
        # episodes only. After rehearsal retraining the model must stay
        # accurate on both.
        cfg = EnvConfig(env_id="chain_mdp", horizon=40, budget=12.0, seed=0)
        old = generate_labeled_segments(cfg, 400, seed=41, slice_fraction=1.0,
                                        min_segment_len=10)
        new = generate_labeled_segments(cfg, 200, seed=42, slice_fraction=0.0)
        old_hold = generate_labeled_segments(cfg, 120, seed=43, slice_fraction=1.0,
                                             min_segment_len=10)
        new_hold = generate_labeled_segments(cfg, 120, seed=44, slice_fraction=0.0)
        model = SsvModel(obs_dim=8, act_dim=1, head="distributional", seed=13)
        train_model(model, old, epochs=30, seed=2, target_accuracy=0.93)
        buffer = FeedbackBuffer()
        buffer.seed_pretraining(old)
        for segment, _ in new:
            buffer.enqueue(segment, cv=1.0)
        buffer.select_for_labeling(len(new))
        buffer.labeling_tick(oracle=lambda t: true_label(t, cfg.budget))
        retrain(model, buffer, rehearsal_fraction=0.5, epochs=10, seed=3)
        assert holdout_accuracy(model, old_hold) >= 0.9
        assert holdout_accuracy(model, new_hold) >= 0.9


def test_buffer_save_load_roundtrip(tmp_path):
    buffer = FeedbackBuffer()
    rng = np.random.default_rng(14)
    buffer.seed_pretraining([(make_segment(rng), 1)])
    sid_a = buffer.enqueue(make_segment(rng), cv=0.8, phat=0.4)
    buffer.enqueue(make_segment(rng), cv=0.3, phat=0.9)
    buffer.select_for_labeling(1)
    buffer.apply_label(sid_a, 1, provenance="human")
    buffer.labeling_tick()
    buffer.save(tmp_path / "buffer")
    loaded = FeedbackBuffer.load(tmp_path / "buffer")
    assert loaded.counts() == buffer.counts()
    assert loaded.labeled_total == 1
    # ids keep incrementing past the restored state
    new_id = loaded.enqueue(make_segment(rng), cv=0.1)
    assert new_id == 2
