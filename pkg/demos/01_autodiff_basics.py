"""Tour of the tensor engine: taped ops, backward, and gradient checking.

Run from the repo root:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from skycast import tensor as T
from skycast.tensor import Parameter, Tape, Tensor

print("== forward ops ==")
a = Tensor([[1.0, 2.0], [3.0, 4.0]])
b = Tensor([[0.5, -1.0], [2.0, 0.0]])
print("a*b      ->", T.multiply(a, b).data.tolist())
print("a@b      ->", T.matmul(a, b).data.tolist())
print("mean(a)  ->", T.reduce_mean(a).item())

print("\n== reverse mode ==")
x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
with Tape() as tape:
    # f(x) = sum(tanh(x) * x)
    loss = T.reduce_sum(T.multiply(T.tanh(x), x))
    tape.backward(loss)
print("f(x)     ->", loss.item())
print("df/dx    ->", x.grad)

print("\n== gradient map over named parameters ==")
w = Parameter("w", Tensor(np.ones((2, 2))))
unused = Parameter("unused", Tensor(np.ones(3)))
with Tape() as tape:
    loss = T.reduce_sum(T.multiply(w.tensor, w.tensor))
    grads = tape.gradients(loss, [w, unused])
for name, g in grads.items():
    print(f"grad[{name}] = {g.tolist()}")

print("\n== finite-difference check ==")
rng = np.random.default_rng(0)
probe = Tensor(rng.uniform(-2, 2, size=(4, 3)))
err = T.grad_check(lambda t: T.reduce_mean(T.log_cosh(t)), [probe])
print(f"max relative error vs central differences: {err:.2e}")
