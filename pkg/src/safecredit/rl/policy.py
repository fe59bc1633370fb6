"""Gaussian policy with a state-independent log-std, plus value networks.

Actions are sampled before clipping and the log density always refers to the
pre-clip sample; the environment applies its own bounds. The policy and both
critics consume the (observation, summary-vector) concatenation when the
constraint model augments the state.
"""

from __future__ import annotations

import numpy as np

from safecredit import nn
from safecredit.numerics import (
    Tensor,
    add,
    clip,
    exp,
    load_checkpoint,
    matmul,
    mul,
    neg,
    save_checkpoint,
    sub,
)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class GaussianPolicy:
    def __init__(self, rng: np.random.Generator, input_dim: int, act_dim: int,
                 hidden: tuple = (64, 64), log_std_init: float = -0.5):
        self.input_dim = input_dim
        self.act_dim = act_dim
        self.mean_net = nn.Mlp(rng, [input_dim, *hidden, act_dim], name="pi")
        self.log_std = Tensor(np.full(act_dim, log_std_init),
                              trainable=True, name="pi.log_std")

    def parameters(self):
        return self.mean_net.parameters() + [self.log_std]

    def _std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX))

    def act(self, inputs: np.ndarray, rng: np.random.Generator):
        """Sample an action; returns (pre-clip action, log density)."""
        mean = self.mean_net.fast(inputs[None, :])[0]
        std = self._std()
        action = mean + std * rng.standard_normal(self.act_dim)
        return action, float(self._log_density(mean, std, action))

    def mean_action(self, inputs: np.ndarray) -> np.ndarray:
        return self.mean_net.fast(inputs[None, :])[0]

    def log_density(self, inputs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mean = self.mean_net.fast(np.atleast_2d(inputs))
        std = self._std()
        return self._log_density(mean, std, np.atleast_2d(actions))

    @staticmethod
    def _log_density(mean, std, action):
        z = (action - mean) / std
        per_dim = -0.5 * z * z - np.log(std) - _HALF_LOG_2PI
        return per_dim.sum(axis=-1)

    def log_density_graph(self, inputs: np.ndarray, actions: np.ndarray) -> Tensor:
        """(B, 1) log densities as a graph node for the surrogate loss."""
        mean = self.mean_net(Tensor(np.atleast_2d(inputs)))
        log_std = clip(self.log_std, lo=LOG_STD_MIN, hi=LOG_STD_MAX)
        inv_std = exp(neg(log_std))
        z = mul(sub(Tensor(np.atleast_2d(actions)), mean), inv_std)
        per_dim = add(add(mul(Tensor(-0.5), mul(z, z)), neg(log_std)),
                      Tensor(-_HALF_LOG_2PI))
        ones = Tensor(np.ones((self.act_dim, 1)))
        return matmul(per_dim, ones)

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"kind": "policy", "input_dim": self.input_dim,
                "act_dim": self.act_dim}
        meta.update(extra_meta or {})
        save_checkpoint(path, nn.parameters_to_arrays(self.parameters()), meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        policy = cls(np.random.default_rng(0), meta["input_dim"], meta["act_dim"])
        nn.arrays_to_parameters(arrays, policy.parameters())
        return policy, meta


class ValueNet:
    def __init__(self, rng: np.random.Generator, input_dim: int,
                 hidden: tuple = (64, 64), name: str = "value"):
        self.net = nn.Mlp(rng, [input_dim, *hidden, 1], name=name)

    def parameters(self):
        return self.net.parameters()

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        return self.net.fast(np.atleast_2d(inputs))[:, 0]

    def predict_graph(self, inputs: np.ndarray) -> Tensor:
        return self.net(Tensor(np.atleast_2d(inputs)))
