"""Binary cross entropy training shared by both constraint models.

The loss never touches raw probabilities outside log space: the safe branch
is the summed log score directly, the unsafe branch is log(1 - exp(.)) after
clamping the probability into [EPS_P, 1 - EPS_P].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from safecredit.errors import UsageError
from safecredit.models.cost_budget import CbModel
from safecredit.models.ssv import DISTRIBUTIONAL, SsvModel
from safecredit.numerics import (
    Adam,
    Tensor,
    add,
    clip,
    concat,
    evaluate_and_grad,
    exp,
    log,
    mean,
    mul,
    neg,
    sub,
)

EPS_P = 1e-7
LOG_EPS_P = float(np.log(EPS_P))
LOG_1M_EPS_P = float(np.log1p(-EPS_P))


@dataclass
class TrainReport:
    loss_curve: list = field(default_factory=list)
    holdout_accuracy: float = float("nan")
    n_train: int = 0
    n_holdout: int = 0
    epochs_run: int = 0
    single_class_warning: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "loss_curve": [float(v) for v in self.loss_curve],
            "holdout_accuracy": float(self.holdout_accuracy),
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "epochs_run": self.epochs_run,
            "single_class_warning": self.single_class_warning,
            "notes": list(self.notes),
        }


def _group_by_length(batch):
    groups: dict[int, list] = {}
    for segment, label in batch:
        groups.setdefault(len(segment), []).append((segment, label))
    return groups


def _bce_from_logp(logp: Tensor, labels: np.ndarray) -> Tensor:
    """Per-example losses (B, 1) from clamped log safe-probabilities."""
    clamped = clip(logp, lo=LOG_EPS_P, hi=LOG_1M_EPS_P)
    log_unsafe = log(sub(Tensor(1.0), exp(clamped)))
    psi = Tensor(labels.reshape(-1, 1))
    one_minus = Tensor(1.0 - labels.reshape(-1, 1))
    return neg(add(mul(psi, clamped), mul(one_minus, log_unsafe)))


def bce_loss(model, batch, sample: bool | None = None,
             rng: np.random.Generator | None = None,
             score_l1: float = 0.0) -> Tensor:
    """Mean binary cross entropy over (segment, label) pairs, as a graph node.

    ``sample`` only matters for the distributional head: True trains through
    reparameterized score samples, False through the distribution means.
    Defaults to sampling when the head is distributional.

    ``score_l1`` adds a small penalty on per-step |log score|: the labels
    leave the split of a segment's total score across steps underdetermined,
    and the penalty prefers the sparsest assignment (steps that carry no
    label information drift back toward zero).
    """
    if len(batch) == 0:
        raise UsageError("empty training batch")
    for _, label in batch:
        if label not in (0, 1):
            raise UsageError(f"labels must be 0 or 1, got {label!r}")
    if isinstance(model, SsvModel):
        if sample is None:
            sample = model.head == DISTRIBUTIONAL
        losses = []
        step_scores = []
        for length_group in _group_by_length(batch).values():
            obs = np.stack([seg.observations for seg, _ in length_group])
            act = np.stack([seg.actions for seg, _ in length_group])
            labels = np.array([lab for _, lab in length_group], dtype=np.float64)
            steps = model.sequence_scores_graph(obs, act, sample=sample, rng=rng)
            total = steps[0]
            for score in steps[1:]:
                total = add(total, score)
            losses.append(_bce_from_logp(total, labels))
            step_scores.extend(steps)
        loss = mean(concat(losses, axis=0))
        if score_l1 > 0.0:
            magnitude = mean(neg(concat(step_scores, axis=0)))
            loss = add(loss, mul(Tensor(score_l1), magnitude))
        return loss
    if isinstance(model, CbModel):
        total = None
        for segment, label in batch:
            log_safe, log_unsafe = model.log_prob_pair_graph(
                segment.observations, segment.actions)
            term = neg(log_safe) if label == 1 else neg(log_unsafe)
            total = term if total is None else add(total, term)
        return mul(total, Tensor(1.0 / len(batch)))
    raise UsageError(f"unsupported model type {type(model).__name__}")


def classify(model, segment) -> int:
    """Predicted label at the 0.5 probability threshold."""
    if isinstance(model, SsvModel):
        return int(model.traj_log_prob_safe(segment) >= np.log(0.5))
    return int(model.prob_safe(segment) >= 0.5)


def holdout_accuracy(model, holdout) -> float:
    if not holdout:
        return float("nan")
    hits = sum(classify(model, seg) == lab for seg, lab in holdout)
    return hits / len(holdout)


def split_holdout(segments, holdout_fraction: float, rng: np.random.Generator):
    """Stratified split; both classes represented in the holdout when present."""
    by_label: dict[int, list] = {}
    for pair in segments:
        by_label.setdefault(pair[1], []).append(pair)
    train, hold = [], []
    for pairs in by_label.values():
        order = rng.permutation(len(pairs))
        n_hold = int(round(holdout_fraction * len(pairs)))
        hold.extend(pairs[i] for i in order[:n_hold])
        train.extend(pairs[i] for i in order[n_hold:])
    return train, hold


def train_model(model, segments, epochs: int = 50, holdout_fraction: float = 0.2,
                batch_size: int = 32, lr: float = 3e-3, seed: int = 0,
                sample: bool | None = None, target_accuracy: float | None = None,
                optimizer: Adam | None = None, holdout=None,
                score_l1: float = 0.0) -> TrainReport:
    """Mini-batch BCE training with a stratified holdout.

    Stops early once ``target_accuracy`` is reached on the holdout. An
    explicit ``holdout`` list replaces the internal split (all of ``segments``
    train). Passing an existing ``optimizer`` continues its moment state (used
    by continual retraining); otherwise a fresh Adam is created.
    """
    report = TrainReport()
    rng = np.random.default_rng(seed)
    labels_present = {label for _, label in segments}
    if len(labels_present) < 2:
        report.single_class_warning = True
        report.notes.append("dataset contains a single class")
    if holdout is not None:
        train, hold = list(segments), list(holdout)
    else:
        train, hold = split_holdout(segments, holdout_fraction, rng)
    if not train:
        train, hold = list(segments), []
    report.n_train, report.n_holdout = len(train), len(hold)
    params = model.parameters()
    opt = optimizer if optimizer is not None else Adam(params, lr=lr)

    for epoch in range(epochs):
        order = rng.permutation(len(train))
        # Equal-length minibatches keep the recurrent graph rectangular.
        buckets: dict[int, list] = {}
        batches = []
        for idx in order:
            pair = train[idx]
            bucket = buckets.setdefault(len(pair[0]), [])
            bucket.append(pair)
            if len(bucket) == batch_size:
                batches.append(list(bucket))
                bucket.clear()
        batches.extend(list(b) for b in buckets.values() if b)
        epoch_losses = []
        for batch in batches:
            loss = bce_loss(model, batch, sample=sample, rng=rng,
                            score_l1=score_l1)
            value, grads = evaluate_and_grad(loss, params)
            opt.step(grads)
            epoch_losses.append(value)
        report.loss_curve.append(float(np.mean(epoch_losses)))
        report.epochs_run = epoch + 1
        if target_accuracy is not None and hold:
            acc = holdout_accuracy(model, hold)
            if acc >= target_accuracy:
                report.holdout_accuracy = acc
                return report
    report.holdout_accuracy = holdout_accuracy(model, hold)
    return report
