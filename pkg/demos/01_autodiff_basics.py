#!/usr/bin/env python3
"""Tour of the tensor engine: build a graph, differentiate it, optimize it.

Everything downstream (constraint models, policies, critics) is composed
from this op set, so a quick finite-difference sanity check against the
backward pass is a good way to build trust in the whole stack.
"""

import numpy as np

from safecredit.numerics import (
    Adam, Tensor, add, evaluate_and_grad, matmul, mean, mul, sigmoid, tanh,
)

rng = np.random.default_rng(0)

# A scalar function: f(x) = sigmoid(x)^2 at x = 0.3
x = Tensor(0.3, trainable=True)
s = sigmoid(x)
f = mul(s, s)
value, (grad,) = evaluate_and_grad(f, [x])
print(f"f(0.3) = {value:.6f}, df/dx = {float(grad):.6f}")

# Central finite differences agree to ~1e-10
h = 1e-5

def f_at(v):
    t = Tensor(v)
    sv = sigmoid(t)
    return mul(sv, sv).item()

fd = (f_at(0.3 + h) - f_at(0.3 - h)) / (2 * h)
print(f"finite differences: {fd:.6f}  (|diff| = {abs(fd - float(grad)):.2e})")

# Fit a tiny network to y = sin(x) on [-2, 2] with Adam
inputs = np.linspace(-2, 2, 64)[:, None]
targets = np.sin(inputs)
w1 = Tensor(rng.normal(scale=0.5, size=(1, 16)), trainable=True)
b1 = Tensor(np.zeros(16), trainable=True)
w2 = Tensor(rng.normal(scale=0.5, size=(16, 1)), trainable=True)
params = [w1, b1, w2]
opt = Adam(params, lr=0.02)

for step in range(400):
    hidden = tanh(add(matmul(Tensor(inputs), w1), b1))
    pred = matmul(hidden, w2)
    err = add(pred, mul(Tensor(-1.0), Tensor(targets)))
    loss = mean(mul(err, err))
    value, grads = evaluate_and_grad(loss, params)
    opt.step(grads)
    if step % 100 == 0:
        print(f"step {step:4d}: mse = {value:.5f}")
print(f"final mse = {value:.5f}")
