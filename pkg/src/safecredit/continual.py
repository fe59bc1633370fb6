"""Feedback buffer, uncertainty-driven labeling, and rehearsal retraining.

Trajectories collected during policy training queue up unlabeled; the ones
whose summed-score distribution has the highest coefficient of variation are
selected for labeling (scripted oracle or a human through the label service).
Retraining mixes the newly labeled segments with a uniform sample of the
pretraining pool so the constraint model tracks the shifting trajectory
distribution without forgetting the old one.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from safecredit.envs.base import Trajectory, read_trajectory_log, write_trajectory_log
from safecredit.errors import UsageError
from safecredit.models.ssv import DISTRIBUTIONAL, SsvModel, neg_lognormal_moments
from safecredit.models.training import TrainReport, train_model

PENDING = "pending"
SELECTED = "selected"
LABELED = "labeled"
EXPIRED = "expired"


@dataclass
class CvEstimate:
    """Moments of the summed per-step score distribution for one segment."""

    mean: float       # sum of per-step means, negative
    variance: float   # sum of per-step variances (conditional independence)

    @property
    def cv(self) -> float:
        # Summed score means are negative; dispersion is relative to |mean|.
        return float(np.sqrt(self.variance) / abs(self.mean))


def cv_score(model: SsvModel, trajectory: Trajectory) -> CvEstimate:
    """Closed-form CV of the summed score under the distributional head.

    Per-step scores are conditionally independent negative lognormals, so the
    sum's mean and variance are the sums of the per-step closed forms.
    """
    if model.head != DISTRIBUTIONAL:
        raise UsageError("cv_score needs the distributional head")
    mus, sigmas = model.step_moments(trajectory.observations, trajectory.actions)
    means, variances = neg_lognormal_moments(mus, sigmas)
    return CvEstimate(mean=float(means.sum()), variance=float(variances.sum()))


@dataclass
class QueuedSegment:
    segment_id: int
    segment: Trajectory
    cv: float
    phat: float
    status: str = PENDING
    label: int | None = None
    provenance: str | None = None
    scores: list | None = None  # per-step log scores at enqueue time (UI aid)


class FeedbackBuffer:
    """Labeled-segment store plus the queue of segments awaiting labels.

    One producer (the rollout loop) enqueues; one labeler (scripted oracle or
    the HTTP service) applies labels; retraining snapshots the labeled sets.
    All public methods take the internal lock.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._pretraining: list = []   # (Trajectory, label, provenance)
        self._fresh: list = []
        self._queue: dict[int, QueuedSegment] = {}
        self._next_id = 0
        self.labeled_total = 0

    # ---- labeled sets ------------------------------------------------------

    def seed_pretraining(self, pairs, provenance: str = "oracle") -> None:
        with self._lock:
            self._pretraining.extend(
                (segment, int(label), provenance) for segment, label in pairs)

    def pretraining_pairs(self) -> list:
        with self._lock:
            return [(segment, label) for segment, label, _ in self._pretraining]

    def fresh_pairs(self) -> list:
        with self._lock:
            return [(segment, label) for segment, label, _ in self._fresh]

    def drain_fresh_into_rehearsal(self) -> None:
        with self._lock:
            self._pretraining.extend(self._fresh)
            self._fresh = []

    # ---- queue -------------------------------------------------------------

    def enqueue(self, segment: Trajectory, cv: float, phat: float = float("nan"),
                scores=None) -> int:
        with self._lock:
            segment_id = self._next_id
            self._next_id += 1
            self._queue[segment_id] = QueuedSegment(
                segment_id, segment, float(cv), float(phat),
                scores=None if scores is None else [float(s) for s in scores])
            return segment_id

    def pending(self) -> list:
        """Pending segments, highest CV first, ties by ascending id."""
        with self._lock:
            items = [q for q in self._queue.values() if q.status == PENDING]
        return sorted(items, key=lambda q: (-q.cv, q.segment_id))

    def selected(self) -> list:
        with self._lock:
            items = [q for q in self._queue.values() if q.status == SELECTED]
        return sorted(items, key=lambda q: (-q.cv, q.segment_id))

    def select_for_labeling(self, k: int) -> list:
        """Mark the k highest-CV pending segments as selected."""
        if k < 0:
            raise UsageError("k must be >= 0")
        with self._lock:
            chosen = self.pending()[:k]
            for item in chosen:
                item.status = SELECTED
            return chosen

    def expire_pending(self) -> int:
        """Drop still-pending segments (their collection window has passed)."""
        with self._lock:
            stale = [q for q in self._queue.values() if q.status == PENDING]
            for item in stale:
                item.status = EXPIRED
            return len(stale)

    def apply_label(self, segment_id: int, label: int, provenance: str) -> None:
        """Attach a label to a selected segment; duplicates are rejected."""
        if label not in (0, 1):
            raise UsageError(f"label must be 0 or 1, got {label!r}")
        with self._lock:
            item = self._queue.get(segment_id)
            if item is None:
                raise KeyError(f"unknown segment id {segment_id}")
            if item.status == LABELED:
                raise UsageError(f"segment {segment_id} already labeled")
            if item.status == EXPIRED:
                raise UsageError(f"segment {segment_id} expired")
            item.label = int(label)
            item.provenance = provenance
            item.status = LABELED

    def labeling_tick(self, oracle=None) -> int:
        """Harvest labels into the fresh set; returns how many arrived.

        With ``oracle`` given (a callable Trajectory -> {0,1}), every selected
        segment is labeled synchronously first. Without it (human mode), only
        labels already applied through ``apply_label`` are harvested.
        """
        with self._lock:
            if oracle is not None:
                for item in list(self._queue.values()):
                    if item.status == SELECTED:
                        self.apply_label(item.segment_id, oracle(item.segment),
                                         provenance="oracle")
            harvested = 0
            for item in list(self._queue.values()):
                if item.status == LABELED:
                    self._fresh.append((item.segment, item.label, item.provenance))
                    del self._queue[item.segment_id]
                    harvested += 1
            self.labeled_total += harvested
            return harvested

    def counts(self) -> dict:
        with self._lock:
            status = {PENDING: 0, SELECTED: 0, LABELED: 0, EXPIRED: 0}
            for item in self._queue.values():
                status[item.status] += 1
            return {
                "pretraining": len(self._pretraining),
                "fresh": len(self._fresh),
                "queue": dict(status),
                "labeled_total": self.labeled_total,
            }

    # ---- persistence ---------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            segments, records = [], []
            for set_name, triples in (("pretraining", self._pretraining),
                                      ("fresh", self._fresh)):
                for i, (segment, label, provenance) in enumerate(triples):
                    key = f"{set_name}-{i}"
                    segments.append(_rekeyed(segment, key))
                    records.append({"key": key, "set": set_name, "label": label,
                                    "provenance": provenance})
            for item in self._queue.values():
                key = f"queue-{item.segment_id}"
                segments.append(_rekeyed(item.segment, key))
                records.append({"key": key, "set": "queue",
                                "segment_id": item.segment_id, "cv": item.cv,
                                "phat": item.phat, "status": item.status,
                                "label": item.label, "provenance": item.provenance,
                                "scores": item.scores})
            state = {"next_id": self._next_id, "labeled_total": self.labeled_total}
        write_trajectory_log(directory / "segments.jsonl", segments)
        with open(directory / "records.jsonl", "w") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
        (directory / "state.json").write_text(json.dumps(state))

    @classmethod
    def load(cls, directory) -> "FeedbackBuffer":
        directory = Path(directory)
        segments = {t.episode_id: t for t in
                    read_trajectory_log(directory / "segments.jsonl")}
        buffer = cls()
        with open(directory / "records.jsonl") as fh:
            for line in fh:
                record = json.loads(line)
                segment = segments[record["key"]]
                if record["set"] == "pretraining":
                    buffer._pretraining.append(
                        (segment, record["label"], record["provenance"]))
                elif record["set"] == "fresh":
                    buffer._fresh.append(
                        (segment, record["label"], record["provenance"]))
                else:
                    item = QueuedSegment(record["segment_id"], segment,
                                         record["cv"], record["phat"],
                                         record["status"], record["label"],
                                         record["provenance"],
                                         record.get("scores"))
                    buffer._queue[item.segment_id] = item
        state = json.loads((directory / "state.json").read_text())
        buffer._next_id = state["next_id"]
        buffer.labeled_total = state["labeled_total"]
        return buffer


def _rekeyed(segment: Trajectory, key: str) -> Trajectory:
    return Trajectory(segment.observations, segment.actions, segment.rewards,
                      segment.true_costs, episode_id=key,
                      t_start=segment.t_start, t_end=segment.t_end)


def retrain(model, buffer: FeedbackBuffer, rehearsal_fraction: float = 0.5,
            epochs: int = 10, seed: int = 0, **train_kwargs) -> TrainReport:
    """Retrain on fresh labels mixed with rehearsal samples, then drain fresh.

    ``rehearsal_fraction`` is the share of the training batch drawn from the
    pretraining pool; 0 trains on fresh data only.
    """
    fresh = buffer.fresh_pairs()
    if not fresh:
        report = TrainReport()
        report.notes.append("no fresh labels; retraining skipped")
        return report
    rng = np.random.default_rng(seed)
    pool = buffer.pretraining_pairs()
    mixed = list(fresh)
    if rehearsal_fraction > 0.0:
        if not pool:
            report_note = "rehearsal requested but pretraining pool is empty"
            n_old = 0
        else:
            report_note = None
            n_old = int(round(len(fresh) * rehearsal_fraction
                              / max(1e-9, 1.0 - rehearsal_fraction)))
            n_old = min(n_old, len(pool)) if rehearsal_fraction < 1.0 else len(pool)
            idx = rng.choice(len(pool), size=n_old, replace=False)
            mixed.extend(pool[i] for i in idx)
    else:
        report_note = None
    report = train_model(model, mixed, epochs=epochs,
                         seed=int(rng.integers(1 << 31)), **train_kwargs)
    if report_note:
        report.notes.append(report_note)
    buffer.drain_fresh_into_rehearsal()
    return report
