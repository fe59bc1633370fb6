"""Cost-and-budget baseline: per-step cost head plus a learnable scalar budget.

The probability of a segment being safe is sigmoid(budget - summed costs).
This model is identifiable only up to a joint shift of budget and cost sum
(adding the same constant to both leaves every prediction unchanged), which
is the degeneracy the recurrent credit-assignment model avoids. The
``nonneg`` flag applies a softplus to the cost head so costs cannot go
negative; the unconstrained form exists to demonstrate the degeneracy.
"""

from __future__ import annotations

import numpy as np

from safecredit import nn
from safecredit.errors import ConfigError, UsageError
from safecredit.numerics import (
    Tensor,
    add,
    load_checkpoint,
    neg,
    save_checkpoint,
    softplus,
    sub,
    tanh,
    tensor_sum,
)
from safecredit.models.ssv import _np_sigmoid, _np_softplus


class CbModel:
    def __init__(self, obs_dim: int, act_dim: int, hidden: int = 64,
                 nonneg: bool = True, budget_init: float | None = None,
                 horizon: int = 200, seed: int = 0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.nonneg = nonneg
        rng = np.random.default_rng(seed)
        self.body = nn.Linear(rng, obs_dim + act_dim, hidden, name="cost.body")
        self.out = nn.Linear(rng, hidden, 1, name="cost.out")
        # Start the budget off the sigmoid's saturated tails.
        init = horizon / 8.0 if budget_init is None else budget_init
        self.budget = Tensor(np.array(float(init)), trainable=True, name="budget")

    def parameters(self):
        return self.body.parameters() + self.out.parameters() + [self.budget]

    @property
    def budget_estimate(self) -> float:
        return float(self.budget.data)

    def step_costs(self, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Estimated per-step costs; non-negative when the model is constrained."""
        x = np.concatenate([np.atleast_2d(observations), np.atleast_2d(actions)], axis=1)
        raw = self.out.fast(np.tanh(self.body.fast(x)))[:, 0]
        return _np_softplus(raw) if self.nonneg else raw

    def prob_safe(self, trajectory) -> float:
        """sigmoid(budget - summed estimated cost), in (0, 1)."""
        if len(trajectory) < 1:
            raise UsageError("cannot score an empty trajectory")
        total = self.step_costs(trajectory.observations, trajectory.actions).sum()
        return float(_np_sigmoid(np.array(self.budget_estimate - total)))

    def margin_graph(self, obs_seq: np.ndarray, act_seq: np.ndarray) -> Tensor:
        """budget - sum of step costs for one segment, as a scalar graph node."""
        x = Tensor(np.concatenate([np.atleast_2d(obs_seq),
                                   np.atleast_2d(act_seq)], axis=1))
        raw = self.out(tanh(self.body(x)))
        costs = softplus(raw) if self.nonneg else raw
        return sub(self.budget, tensor_sum(costs))

    def log_prob_pair_graph(self, obs_seq, act_seq):
        """(log P_safe, log(1-P_safe)) from the sigmoid's softplus identities."""
        margin = self.margin_graph(obs_seq, act_seq)
        return neg(softplus(neg(margin))), neg(softplus(margin))

    def clone(self) -> "CbModel":
        """Independent copy with identical parameters."""
        twin = CbModel(self.obs_dim, self.act_dim, hidden=self.hidden,
                       nonneg=self.nonneg)
        for mine, theirs in zip(self.parameters(), twin.parameters()):
            theirs.data = mine.data.copy()
        return twin

    def save(self, path) -> None:
        save_checkpoint(path, nn.parameters_to_arrays(self.parameters()), meta={
            "kind": "cb",
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "hidden": self.hidden,
            "nonneg": self.nonneg,
        })

    @classmethod
    def load(cls, path) -> "CbModel":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "cb":
            raise ConfigError(f"checkpoint is not a cb model: {meta}")
        model = cls(obs_dim=meta["obs_dim"], act_dim=meta["act_dim"],
                    hidden=meta["hidden"], nonneg=meta["nonneg"])
        nn.arrays_to_parameters(arrays, model.parameters())
        return model
