"""A short walk through the tape-based autodiff core.

Builds a tiny conv -> relu -> mean graph, reads its gradient off the tape,
and compares it with central differences via ``grad_check``.

    python3 demos/01_autodiff_tour.py
"""
import numpy as np

from newsstego import autodiff as ad
from newsstego.autodiff import Tape, Tensor, grad_check

rng = np.random.default_rng(0)
x = Tensor(rng.uniform(size=(1, 3, 8, 8)), requires_grad=True)
w = Tensor(rng.normal(0, 0.3, size=(4, 3, 3, 3)), requires_grad=True)

with Tape() as tape:
    y = ad.mean(ad.relu(ad.conv2d(x, w, padding=1)))
    recorded = len(tape.nodes)
grads = tape.backward(y)

print(f"forward value         {y.item():.6f}")
print(f"|dy/dx| summed        {np.abs(grads[x]).sum():.6f}")
print(f"|dy/dw| summed        {np.abs(grads[w]).sum():.6f}")
print(f"tape recorded {recorded} nodes")

# the same graph as a function of the image only, checked numerically
f = lambda t: ad.mean(ad.tanh(ad.conv2d(t, Tensor(w.data), padding=1)))
print(f"grad_check max rel err {grad_check(f, Tensor(x.data)):.2e}")
