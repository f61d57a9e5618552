"""Reverse-mode differentiation and finite-difference checking.

Builds a tiny graph by hand, backpropagates through it, and compares the
tape's gradients with central differences, including a graph that routes
one path through stop_gradient.
"""

import numpy as np

from lumina import autodiff as ad
from lumina.autodiff import Tensor

rng = np.random.default_rng(0)

# A convolution followed by a sigmoid, reduced to a scalar.
x = Tensor(rng.uniform(size=(1, 3, 8, 8)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.3, requires_grad=True)
loss = ad.mean(ad.sigmoid(ad.conv2d(x, w, padding=1)))
ad.backward(loss)
print(f"loss {loss.item():.6f}; |dL/dw| max {np.abs(w.grad).max():.3e}")

# The same gradient, checked numerically in double precision.
err = ad.gradient_check(lambda t: ad.mean(ad.sigmoid(ad.conv2d(x, t, padding=1))), w)
print(f"max relative error against central differences: {err:.2e}")

# stop_gradient: d/dx sum(x * sg(x)) is sg(x), not 2x.
y = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
ad.backward(ad.tsum(y * ad.stop_gradient(y)))
print("gradient through a half-stopped product:", y.grad, "(values of x)")

# Broadcasting a one-channel illumination over three colour channels.
R = Tensor(rng.uniform(size=(1, 3, 2, 2)), requires_grad=True)
L = Tensor(rng.uniform(0.1, 1, size=(1, 1, 2, 2)), requires_grad=True)
ad.backward(ad.tsum(R * L))
print("dL gathers all three channels:", np.allclose(L.grad, R.data.sum(axis=1, keepdims=True)))
