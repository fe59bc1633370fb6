"""Reverse-mode automatic differentiation over dense float64 arrays.

The graph is built dynamically: every op returns a ``Tensor`` holding the
computed value, references to its parents, and a closure that pushes the
adjoint back onto them. ``backward`` on a scalar output walks the graph in
reverse topological order, visiting each node once. Leaf tensors created with
``trainable=True`` form the parameter set.

Supported ops: matmul, add, mul, tanh, sigmoid, softplus, log, exp, neg, sum,
mean, concatenate, clip. Everything else in this package is composed from
these. Arrays are at most 2-D; the only broadcasting is scalar-with-anything
and adding a 1-D bias to the rows of a 2-D matrix.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not match the op's contract."""


class NumericError(ArithmeticError):
    """An op produced or received a non-finite value."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim > 2:
        raise ShapeError(f"tensors are at most 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    """A node in the computation graph.

    ``data`` is the cached output (np.float64 ndarray, 0-D to 2-D), ``grad``
    the accumulated adjoint after a backward pass. Leaf tensors with
    ``trainable=True`` are the optimizable parameters.
    """

    __slots__ = ("data", "grad", "trainable", "name", "_parents", "_backward")

    def __init__(self, data, trainable: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.trainable = trainable
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = self.name or ("param" if self.trainable else "node")
        return f"Tensor({tag}, shape={self.data.shape})"

    # Operator sugar; the named functions below are the actual op set.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        """Reverse-mode sweep from this scalar node.

        Accumulates adjoints into ``grad`` of every reachable node; each node's
        backward closure runs exactly once.
        """
        if self.data.size != 1:
            raise ShapeError("backward() starts from a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64)
    else:
        node.grad = node.grad + grad


def _check_finite(arr: np.ndarray, op: str, node_name: str | None) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        where = f" in node '{node_name}'" if node_name else ""
        raise NumericError(f"{op} produced non-finite values{where}")
    return arr


def matmul(a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = _check_finite(a.data @ b.data, "matmul", name)

    def backward(grad):
        _accumulate(a, grad @ b.data.T)
        _accumulate(b, a.data.T @ grad)

    return Tensor(out_data, name=name, _parents=(a, b), _backward=backward)


def add(a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
    """Elementwise add; also accepts scalar operands and 2-D + 1-D row bias."""
    a, b = _wrap(a), _wrap(b)
    bias_on = None
    if a.shape != b.shape:
        if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
            bias_on = b
        elif b.data.ndim == 2 and a.data.ndim == 1 and b.shape[1] == a.shape[0]:
            bias_on = a
        elif a.data.size != 1 and b.data.size != 1:
            raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    out_data = _check_finite(a.data + b.data, "add", name)

    def backward(grad):
        for operand in (a, b):
            g = grad
            if operand.data.shape != grad.shape:
                if operand is bias_on:
                    g = grad.sum(axis=0)
                else:  # scalar operand
                    g = grad.sum().reshape(operand.data.shape)
            _accumulate(operand, g)

    return Tensor(out_data, name=name, _parents=(a, b), _backward=backward)


def mul(a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
    """Elementwise multiply; also scalar operands and 2-D times 1-D row scale."""
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        row_scaled = (
            (a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0])
            or (b.data.ndim == 2 and a.data.ndim == 1 and b.shape[1] == a.shape[0]))
        if not row_scaled:
            raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    out_data = _check_finite(a.data * b.data, "mul", name)

    def backward(grad):
        for operand, other in ((a, b), (b, a)):
            g = grad * other.data
            if operand.data.shape != g.shape:
                if operand.data.ndim == 1 and g.ndim == 2:
                    g = g.sum(axis=0)
                else:  # scalar operand
                    g = g.sum().reshape(operand.data.shape)
            _accumulate(operand, g)

    return Tensor(out_data, name=name, _parents=(a, b), _backward=backward)


def neg(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)

    def backward(grad):
        _accumulate(a, -grad)

    return Tensor(-a.data, name=name, _parents=(a,), _backward=backward)


def sub(a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
    return add(a, neg(b), name=name)


def tanh(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def backward(grad):
        _accumulate(a, grad * (1.0 - out_data * out_data))

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def sigmoid(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    # Stable in both tails: never exponentiates a positive argument.
    out_data = np.where(a.data >= 0,
                        1.0 / (1.0 + np.exp(-np.abs(a.data))),
                        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(grad):
        _accumulate(a, grad * out_data * (1.0 - out_data))

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def softplus(a: Tensor, name: str | None = None) -> Tensor:
    """log(1 + e^x), computed as max(x, 0) + log1p(e^-|x|). Strictly positive."""
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward(grad):
        sig = np.where(a.data >= 0,
                       1.0 / (1.0 + np.exp(-np.abs(a.data))),
                       np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
        _accumulate(a, grad * sig)

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def log(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0.0):
        where = f" in node '{name}'" if name else ""
        raise NumericError(f"log of non-positive value{where}")
    out_data = np.log(a.data)

    def backward(grad):
        _accumulate(a, grad / a.data)

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def exp(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        out_data = _check_finite(np.exp(a.data), "exp", name)

    def backward(grad):
        _accumulate(a, grad * out_data)

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def clip(a: Tensor, lo: float | None = None, hi: float | None = None,
         name: str | None = None) -> Tensor:
    """Clamp values to [lo, hi]; gradient is 1 inside the interval, 0 outside."""
    a = _wrap(a)
    if lo is None and hi is None:
        raise ValueError("clip needs at least one bound")
    out_data = np.clip(a.data, lo if lo is not None else -np.inf,
                       hi if hi is not None else np.inf)
    inside = np.ones_like(a.data)
    if lo is not None:
        inside = inside * (a.data >= lo)
    if hi is not None:
        inside = inside * (a.data <= hi)

    def backward(grad):
        _accumulate(a, grad * inside)

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def tensor_sum(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum()

    def backward(grad):
        _accumulate(a, np.full(a.data.shape, float(grad)))

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def mean(a: Tensor, name: str | None = None) -> Tensor:
    a = _wrap(a)
    n = a.data.size
    out_data = a.data.mean()

    def backward(grad):
        _accumulate(a, np.full(a.data.shape, float(grad) / n))

    return Tensor(out_data, name=name, _parents=(a,), _backward=backward)


def concat(parts: Sequence[Tensor], axis: int = 0, name: str | None = None) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    ndim = parts[0].data.ndim
    if any(p.data.ndim != ndim for p in parts):
        raise ShapeError("concat operands must share rank")
    if axis >= ndim:
        raise ShapeError(f"concat axis {axis} out of range for rank {ndim}")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for part, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * ndim
            sl[axis] = slice(start, stop)
            _accumulate(part, grad[tuple(sl)])

    return Tensor(out_data, name=name, _parents=tuple(parts), _backward=backward)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def evaluate_and_grad(output: Tensor, params: Sequence[Tensor]):
    """Run the backward pass and collect per-parameter gradients.

    Returns ``(value, grads)`` where ``grads`` is aligned with ``params``;
    parameters the output does not depend on get zero gradients.
    """
    zero_grads(params)
    output.backward()
    value = output.item()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
             for p in params]
    return value, grads
