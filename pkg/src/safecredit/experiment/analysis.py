"""Diagnostics over trained score sequences: where does the model put cost?

Three views, all computed from (per-step log scores, per-step true costs):

- probability-vs-cost buckets: quartiles of the predicted safe-probability,
  grouped by a trajectory's total true cost;
- flat-region ratio: average |log score| inside long zero-cost stretches,
  relative to the trajectory average (low = the model stays quiet where
  nothing costly happens);
- budget-crossing windows: average |log score| in 5-step windows around the
  step where cumulative cost first exceeds the budget, relative to the
  trajectory average (high right after the crossing = sharp credit).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BUCKET_EDGES = ((0.0, 5.0), (5.0, 15.0), (15.0, 25.0), (25.0, float("inf")))
BUCKET_NAMES = ("0-5", "5-15", "15-25", ">25")
WINDOW_OFFSETS = tuple(range(-10, 16))
WINDOW_LEN = 5
FLAT_MIN_LEN = 10


def bucket_of(total_cost: float) -> str:
    # Edges are inclusive on the right: 5 lands in "0-5", 25 in "15-25".
    for name, (_, hi) in zip(BUCKET_NAMES, BUCKET_EDGES):
        if total_cost <= hi:
            return name
    return BUCKET_NAMES[-1]


def flat_region_ratio(scores: np.ndarray, costs: np.ndarray,
                      min_len: int = FLAT_MIN_LEN):
    """Mean |log score| over maximal zero-cost runs of min_len+, over the
    trajectory mean. None when the trajectory has no such run."""
    scores = np.abs(np.asarray(scores, dtype=np.float64))
    costs = np.asarray(costs, dtype=np.float64)
    overall = scores.mean()
    runs = []
    start = None
    for t in range(len(costs) + 1):
        zero = t < len(costs) and costs[t] == 0.0
        if zero and start is None:
            start = t
        elif not zero and start is not None:
            if t - start >= min_len:
                runs.append((start, t))
            start = None
    if not runs:
        return None
    flat_mean = np.mean(np.concatenate([scores[a:b] for a, b in runs]))
    if overall == 0.0:
        return 0.0
    return float(flat_mean / overall)


def budget_crossing_step(costs: np.ndarray, budget: float):
    """First step whose cumulative cost exceeds the budget, else None."""
    cumulative = np.cumsum(np.asarray(costs, dtype=np.float64))
    above = np.nonzero(cumulative > budget)[0]
    return int(above[0]) if len(above) else None


def window_ratios(scores: np.ndarray, costs: np.ndarray, budget: float,
                  offsets=WINDOW_OFFSETS, window_len: int = WINDOW_LEN):
    """|log score| window means around the crossing, over the trajectory mean.

    Returns (crossing step, {offset: ratio}) with only fully in-range windows,
    or (None, {}) for trajectories that never exceed the budget.
    """
    crossing = budget_crossing_step(costs, budget)
    if crossing is None:
        return None, {}
    scores = np.abs(np.asarray(scores, dtype=np.float64))
    overall = scores.mean()
    if overall == 0.0:
        return crossing, {}
    ratios = {}
    for offset in offsets:
        lo = crossing + offset
        hi = lo + window_len
        if lo < 0 or hi > len(scores):
            continue
        ratios[int(offset)] = float(scores[lo:hi].mean() / overall)
    return crossing, ratios


def normalized_inferred_cost(scores: np.ndarray) -> np.ndarray:
    """Per-step log score over the trajectory's minimum log score, in [0, 1]."""
    scores = np.asarray(scores, dtype=np.float64)
    floor = scores.min()
    if floor == 0.0:
        return np.zeros_like(scores)
    return scores / floor


@dataclass
class AnalysisReport:
    buckets: dict = field(default_factory=dict)
    flat_ratios: list = field(default_factory=list)
    mean_flat_ratio: float = float("nan")
    window_mean_ratios: dict = field(default_factory=dict)
    n_crossing: int = 0
    n_trajectories: int = 0
    no_crossing_flag: bool = False
    per_trajectory: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "buckets": self.buckets,
            "flat_ratios": self.flat_ratios,
            "mean_flat_ratio": self.mean_flat_ratio,
            "window_mean_ratios": {str(k): v for k, v in
                                   self.window_mean_ratios.items()},
            "n_crossing": self.n_crossing,
            "n_trajectories": self.n_trajectories,
            "no_crossing_flag": self.no_crossing_flag,
            "per_trajectory": self.per_trajectory,
        }

    def save(self, directory) -> None:
        """JSON report plus flat CSV tables for plotting."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "analysis.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True))
        with open(directory / "buckets.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bucket", "count", "p25", "median", "p75"])
            for name in BUCKET_NAMES:
                stats = self.buckets.get(name)
                if stats:
                    writer.writerow([name, stats["count"], stats["p25"],
                                     stats["median"], stats["p75"]])
                else:
                    writer.writerow([name, 0, "", "", ""])
        with open(directory / "flat_regions.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trajectory", "flat_ratio"])
            for i, ratio in enumerate(self.flat_ratios):
                writer.writerow([i, ratio])
        with open(directory / "windows.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["offset", "mean_ratio", "n"])
            for offset in sorted(self.window_mean_ratios):
                entry = self.window_mean_ratios[offset]
                writer.writerow([offset, entry["mean"], entry["n"]])


def analyze_scores(score_sequences, cost_sequences, budget: float,
                   flat_min_len: int = FLAT_MIN_LEN) -> AnalysisReport:
    """Pure function of (scores, costs, budget); byte-identical on re-runs."""
    report = AnalysisReport()
    report.n_trajectories = len(score_sequences)
    bucket_phats = {name: [] for name in BUCKET_NAMES}
    window_accumulator: dict[int, list] = {}
    for scores, costs in zip(score_sequences, cost_sequences):
        scores = np.asarray(scores, dtype=np.float64)
        costs = np.asarray(costs, dtype=np.float64)
        total_cost = float(costs.sum())
        phat = float(np.exp(scores.sum()))
        bucket_phats[bucket_of(total_cost)].append(phat)
        flat = flat_region_ratio(scores, costs, flat_min_len)
        if flat is not None:
            report.flat_ratios.append(flat)
        crossing, ratios = window_ratios(scores, costs, budget)
        if crossing is not None:
            report.n_crossing += 1
            for offset, ratio in ratios.items():
                window_accumulator.setdefault(offset, []).append(ratio)
        report.per_trajectory.append({
            "total_cost": total_cost,
            "phat": phat,
            "flat_ratio": flat,
            "crossing_step": crossing,
            "normalized_cost": normalized_inferred_cost(scores).tolist(),
        })
    for name, values in bucket_phats.items():
        if values:
            arr = np.asarray(values)
            report.buckets[name] = {
                "count": len(arr),
                "p25": float(np.percentile(arr, 25)),
                "median": float(np.percentile(arr, 50)),
                "p75": float(np.percentile(arr, 75)),
                "mean": float(arr.mean()),
            }
    report.mean_flat_ratio = (float(np.mean(report.flat_ratios))
                              if report.flat_ratios else float("nan"))
    report.window_mean_ratios = {
        offset: {"mean": float(np.mean(vals)), "n": len(vals)}
        for offset, vals in sorted(window_accumulator.items())}
    report.no_crossing_flag = report.n_crossing == 0
    return report
