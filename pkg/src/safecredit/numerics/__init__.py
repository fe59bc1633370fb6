"""Dense float64 tensors with reverse-mode autodiff and an Adam optimizer."""

from safecredit.numerics.tensor import (
    NumericError,
    ShapeError,
    Tensor,
    add,
    clip,
    concat,
    evaluate_and_grad,
    exp,
    log,
    matmul,
    mean,
    mul,
    neg,
    sigmoid,
    softplus,
    sub,
    tensor_sum,
    tanh,
)
from safecredit.numerics.optim import Adam
from safecredit.numerics.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "NumericError",
    "ShapeError",
    "Tensor",
    "add",
    "clip",
    "concat",
    "evaluate_and_grad",
    "exp",
    "log",
    "load_checkpoint",
    "matmul",
    "mean",
    "mul",
    "neg",
    "save_checkpoint",
    "sigmoid",
    "softplus",
    "sub",
    "tensor_sum",
    "tanh",
]
