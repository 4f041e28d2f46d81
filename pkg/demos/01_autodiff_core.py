"""Walk through the tape autodiff core: build a little expression, run the
backward pass, and confirm one derivative against a finite difference.
"""
import numpy as np

from mdlvideo.ops import add, mul, relu, scale, sum_all
from mdlvideo.tensor import Tensor, active_tape, backward, no_grad

rng = np.random.default_rng(0)

a = Tensor(rng.standard_normal((3, 3)), requires_grad=True, name="a")
b = Tensor(rng.standard_normal((3, 3)), requires_grad=True, name="b")

# y = sum(relu(a * b + 2a)); every op pushes a node onto the module tape
y = sum_all(relu(add(mul(a, b), scale(a, 2.0))))
print("recorded ops:", [n.op_name for n in active_tape().nodes])
print("loss value  :", y.item())

backward(y)
print("grad wrt a  :\n", a.grad)

# check one coordinate the dumb way: (f(a + h) - f(a - h)) / 2h
h = 1e-6
da = np.zeros_like(a.data)
da[1, 2] = h


def f(avals):
    with no_grad():
        out = sum_all(relu(add(mul(Tensor(avals), b), scale(Tensor(avals), 2.0))))
    return out.item()


fd = (f(a.data + da) - f(a.data - da)) / (2 * h)
print(f"a[1,2]: analytic {a.grad[1, 2]:+.8f}  finite-diff {fd:+.8f}")
assert abs(a.grad[1, 2] - fd) < 1e-5

# gradients accumulate until you clear them; a second backward doubles them
first = a.grad.copy()
backward(sum_all(relu(add(mul(a, b), scale(a, 2.0)))))
print("second backward doubles grads:", np.allclose(a.grad, 2 * first))

# inside no_grad the tape stays empty, so nothing can be backpropagated
with no_grad():
    _ = mul(a, b)
print("ops recorded under no_grad:", len(active_tape().nodes))
