"""Run orchestration: pretrain, constrained training with continual labeling,
evaluation, and score diagnostics.

A run writes, per seed: ``metrics.jsonl`` (one record per update, plus eval
records), model checkpoints, the persisted feedback buffer, and a
``summary.json``; the run directory gets a cross-seed ``summary.json`` with
the mean/std of final reward, true cost, and labeled-trajectory count.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import yaml

from safecredit.continual import FeedbackBuffer, cv_score, retrain
from safecredit.envs.base import EnvConfig, make_env, read_trajectory_log
from safecredit.envs.datasets import generate_labeled_segments
from safecredit.errors import ConfigError
from safecredit.experiment.analysis import AnalysisReport, analyze_scores
from safecredit.experiment.config import RunConfig
from safecredit.experiment.service import LabelService
from safecredit.models import CbModel, SsvModel, train_model
from safecredit.models.ssv import neg_lognormal_moments
from safecredit.rl import LagrangianTrainer, evaluate_policy
from safecredit.rl.policy import GaussianPolicy


def _seed_env_config(config: RunConfig, seed: int) -> EnvConfig:
    env = dataclasses.replace(config.env, seed=seed)
    return env


def run_pretrain(config: RunConfig, seed: int, out_dir=None):
    """Scripted-policy dataset generation plus constraint-model pretraining.

    Returns (model, report, training pairs, validation pairs); the validation
    split stays fixed so retraining rounds report a comparable accuracy.
    """
    env_cfg = _seed_env_config(config, seed)
    probe = make_env(env_cfg)
    dataset = generate_labeled_segments(
        env_cfg, config.pretrain.n_segments,
        seed=config.pretrain.dataset_seed + seed,
        slice_fraction=config.pretrain.slice_fraction,
        min_segment_len=config.pretrain.min_segment_len)
    split_rng = np.random.default_rng(config.pretrain.dataset_seed + seed + 1)
    from safecredit.models.training import split_holdout
    train_pairs, val_pairs = split_holdout(dataset, 0.15, split_rng)
    if config.mode == "cb":
        model = CbModel(probe.obs_dim, probe.act_dim,
                        horizon=env_cfg.horizon, seed=seed)
    else:
        model = SsvModel(probe.obs_dim, probe.act_dim,
                         hidden_dim=config.model.hidden_dim,
                         head=config.model.head,
                         decoder_hidden=config.model.decoder_hidden,
                         decoder_input=config.model.decoder_input, seed=seed)
    report = train_model(model, train_pairs,
                         epochs=config.pretrain.epochs,
                         batch_size=config.pretrain.batch_size,
                         lr=config.pretrain.lr, seed=seed,
                         target_accuracy=config.pretrain.target_accuracy,
                         holdout=val_pairs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model.save(out_dir / ("cb.npz" if config.mode == "cb" else "ssv.npz"))
        (out_dir / "pretrain_report.json").write_text(
            json.dumps(report.to_dict(), indent=2))
    return model, report, train_pairs, val_pairs


def _enqueue_episode(buffer, model, config: RunConfig, episode) -> None:
    if config.mode == "cb":
        buffer.enqueue(episode, cv=0.0, phat=model.prob_safe(episode))
        return
    if model.head == "distributional":
        mus, sigmas = model.step_moments(episode.observations, episode.actions)
        means, variances = neg_lognormal_moments(mus, sigmas)
        mean_sum = float(means.sum())
        est_cv = float(np.sqrt(variances.sum()) / abs(mean_sum))
        buffer.enqueue(episode, cv=est_cv, phat=float(np.exp(mean_sum)),
                       scores=means.tolist())
    else:
        scores = model.score_sequence(episode.observations, episode.actions)
        buffer.enqueue(episode, cv=0.0, phat=float(np.exp(scores.sum())),
                       scores=scores.tolist())


def train_single_seed(config: RunConfig, seed: int, seed_dir,
                      pretrained=None) -> dict:
    """One full constrained-training run; returns its summary record."""
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    env_cfg = _seed_env_config(config, seed)
    env = make_env(env_cfg)
    eval_env = make_env(dataclasses.replace(env_cfg, seed=seed + 7919))

    buffer = FeedbackBuffer()
    model = None
    validation = []
    model_accuracy = float("nan")
    if config.mode != "oracle":
        if pretrained is not None:
            model, pre_report, train_pairs, validation = pretrained
        else:
            model, pre_report, train_pairs, validation = run_pretrain(config, seed)
        buffer.seed_pretraining(train_pairs)
        model_accuracy = pre_report.holdout_accuracy

    trainer = LagrangianTrainer(
        env, dataclasses.replace(config.trainer, mode=config.mode), seed=seed,
        ssv_model=model if config.mode == "ssv" else None,
        cb_model=model if config.mode == "cb" else None)

    status = {"iteration": 0, "steps": 0, "lambda": 0.0,
              "model_accuracy": model_accuracy, "seed": seed}
    service = None
    if config.labeling_source == "human":
        geometry = env.geometry() if hasattr(env, "geometry") else {}
        service = LabelService(buffer, status_fn=lambda: dict(status),
                               geometry=geometry, port=config.service_port)
        service.start()
        (seed_dir / "service.json").write_text(json.dumps({"url": service.url}))

    metrics_path = seed_dir / "metrics.jsonl"
    episodes_since_label = 0
    iterations = max(1, math.ceil(config.total_steps / config.trainer.rollout_steps))
    try:
        with open(metrics_path, "w") as metrics:
            for iteration in range(iterations):
                batch = trainer.collect_rollout()
                if config.mode != "oracle":
                    for episode in batch.episodes:
                        _enqueue_episode(buffer, model, config, episode)
                episodes_since_label += len(batch.episodes)
                if (config.mode != "oracle"
                        and episodes_since_label >= config.continual.label_every_episodes):
                    episodes_since_label = 0
                    pending = buffer.pending()
                    if config.continual.strategy == "all" or config.mode == "cb":
                        k = len(pending)
                    else:
                        k = math.ceil(config.continual.select_fraction * len(pending))
                    buffer.select_for_labeling(k)
                    if config.labeling_source == "oracle":
                        buffer.labeling_tick(oracle=env.true_label)
                    else:
                        buffer.labeling_tick()
                    buffer.expire_pending()
                    if buffer.counts()["fresh"] > 0:
                        report = retrain(
                            model, buffer,
                            rehearsal_fraction=config.continual.rehearsal_fraction,
                            epochs=config.continual.retrain_epochs,
                            seed=seed + iteration,
                            batch_size=config.pretrain.batch_size,
                            lr=config.continual.retrain_lr,
                            holdout=validation)
                        if np.isfinite(report.holdout_accuracy):
                            model_accuracy = report.holdout_accuracy
                diag = trainer.update(batch)
                record = {
                    "kind": "train", "iteration": iteration,
                    "steps": trainer.total_env_steps,
                    "mean_reward": diag["mean_episode_reward"],
                    "mean_true_cost": diag["mean_episode_true_cost"],
                    "j_c": diag["j_c"], "lambda": diag["lambda"],
                    "limit": diag["limit"],
                    "labeled_trajectories": buffer.labeled_total,
                    "model_accuracy": model_accuracy,
                }
                if "jensen_gap" in diag:
                    record["jensen_gap"] = diag["jensen_gap"]
                metrics.write(json.dumps(record) + "\n")
                metrics.flush()
                status.update(iteration=iteration,
                              steps=trainer.total_env_steps,
                              **{"lambda": diag["lambda"]},
                              model_accuracy=model_accuracy)
                if (iteration + 1) % config.checkpoint_every == 0:
                    _save_checkpoints(trainer, model, config, seed_dir)
            final = evaluate_policy(
                trainer.policy, eval_env, n_episodes=config.eval_episodes,
                seed_base=config.eval_seed_base,
                ssv_model=model if config.mode == "ssv" else None,
                labeled_count=buffer.labeled_total)
            metrics.write(json.dumps({"kind": "eval", **final}) + "\n")
    finally:
        _save_checkpoints(trainer, model, config, seed_dir)
        buffer.save(seed_dir / "buffer")
        if service is not None:
            service.stop()

    summary = {"seed": seed, "final_lambda": trainer.lambda_,
               "model_accuracy": model_accuracy, **final}
    (seed_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _save_checkpoints(trainer, model, config: RunConfig, seed_dir: Path) -> None:
    trainer.save_policy(seed_dir / "policy.npz")
    if config.mode == "ssv":
        model.save(seed_dir / "ssv.npz")
    elif config.mode == "cb":
        model.save(seed_dir / "cb.npz")


def run_train(config: RunConfig) -> dict:
    """All seeds of a run; writes the cross-seed mean/std summary."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(yaml.safe_dump(config.to_dict()))
    shared = None
    if config.mode != "oracle":
        # One pretraining pass per run; each seed then continues from its own
        # copy, so continual retraining still diverges per seed.
        shared = run_pretrain(config, config.seeds[0],
                              out_dir=out_dir / "pretrain")
    per_seed = []
    for seed in config.seeds:
        pretrained = None
        if shared is not None:
            model, report, train_pairs, validation = shared
            pretrained = (model.clone(), report, train_pairs, validation)
        per_seed.append(train_single_seed(config, seed, out_dir / f"seed{seed}",
                                          pretrained=pretrained))
    keys = ("mean_reward", "mean_true_cost", "fraction_safe",
            "labeled_trajectories")
    summary = {
        "per_seed": per_seed,
        "mean": {k: float(np.mean([s[k] for s in per_seed])) for k in keys},
        "std": {k: float(np.std([s[k] for s in per_seed])) for k in keys},
        "n_seeds": len(per_seed),
        "mode": config.mode,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def run_eval(config: RunConfig, policy_path, ssv_path=None,
             n_episodes: int | None = None, out_path=None) -> dict:
    """Re-evaluate a saved policy on a freshly seeded evaluation env."""
    n = config.eval_episodes if n_episodes is None else n_episodes
    policy, meta = GaussianPolicy.load(policy_path)
    ssv = SsvModel.load(ssv_path) if ssv_path is not None else None
    if meta.get("mode") == "ssv" and ssv is None:
        raise ConfigError("policy was trained with a summary-vector state; "
                          "pass the matching constraint model checkpoint")
    env = make_env(_seed_env_config(config, config.seeds[0] + 7919))
    if n == 0:
        metrics = {"n_episodes": 0, "warning": "no evaluation episodes requested"}
    else:
        metrics = evaluate_policy(policy, env, n_episodes=n,
                                  seed_base=config.eval_seed_base, ssv_model=ssv)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(metrics, indent=2))
    return metrics


def run_analyze(ssv_path, trajectories, budget: float,
                out_dir=None) -> AnalysisReport:
    """Score a trajectory set with a saved model and report the diagnostics."""
    model = SsvModel.load(ssv_path)
    if isinstance(trajectories, (str, Path)):
        trajectories = read_trajectory_log(trajectories)
    scores = [model.score_sequence(t.observations, t.actions)
              for t in trajectories]
    costs = [t.true_costs for t in trajectories]
    report = analyze_scores(scores, costs, budget)
    if out_dir is not None:
        report.save(out_dir)
    return report
