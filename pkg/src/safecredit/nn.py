"""Parameter containers for small fully-connected networks.

Only bookkeeping lives here: weight initialization, parameter listing, and a
graph-mode / fast-path (plain numpy, no graph) forward for each layer. All
math goes through :mod:`safecredit.numerics`.
"""

from __future__ import annotations

import numpy as np

from safecredit.numerics import Tensor, add, matmul, tanh


def _init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int,
                 name: str = "linear"):
        self.weight = Tensor(_init_weight(rng, in_dim, out_dim),
                             trainable=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_dim), trainable=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def fast(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.data + self.bias.data

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Mlp:
    """Stack of Linear layers with tanh between them; linear final layer."""

    def __init__(self, rng: np.random.Generator, dims: list[int], name: str = "mlp"):
        if len(dims) < 2:
            raise ValueError("Mlp needs at least input and output dims")
        self.layers = [Linear(rng, dims[i], dims[i + 1], name=f"{name}.{i}")
                       for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = tanh(layer(x))
        return self.layers[-1](x)

    def fast(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers[:-1]:
            x = np.tanh(layer.fast(x))
        return self.layers[-1].fast(x)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


def parameters_to_arrays(params: list[Tensor]) -> dict:
    return {str(i): p.data for i, p in enumerate(params)}


def arrays_to_parameters(arrays: dict, params: list[Tensor]) -> None:
    """Load checkpoint arrays back into an existing parameter list, in order."""
    if len(arrays) != len(params):
        raise ValueError(f"checkpoint has {len(arrays)} arrays, model has {len(params)}")
    for i, p in enumerate(params):
        arr = np.asarray(arrays[str(i)], dtype=np.float64)
        if arr.shape != p.data.shape:
            raise ValueError(f"array {i} shape {arr.shape} != param {p.data.shape}")
        p.data = arr
