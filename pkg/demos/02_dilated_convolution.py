"""Dilated convolution: zero-inflation identity and the 25x25 receptive field.

Run from the repo root:  python3 demos/02_dilated_convolution.py
"""

import numpy as np

from skycast.layers import conv2d, zero_inflate_kernel
from skycast.tensor import Tensor

rng = np.random.default_rng(7)

print("== dilation equals zero-inflated ordinary convolution, bit-exactly ==")
x = Tensor(rng.standard_normal((2, 12, 12)))
kernel = rng.standard_normal((3, 2, 3, 3))
bias = Tensor(rng.standard_normal(3))
dilated = conv2d(x, Tensor(kernel), bias, dilation=(3, 3))
inflated = conv2d(x, Tensor(zero_inflate_kernel(kernel, (3, 3))), bias, dilation=(1, 1))
print("identical bits:", dilated.data.tobytes() == inflated.data.tobytes())

print("\n== receptive field of the 7x7 / dilation-4 stem ==")
k = Tensor(rng.uniform(0.5, 1.0, size=(1, 1, 7, 7)))
b = Tensor(np.zeros(1))
base = np.zeros((1, 41, 41))
ref = conv2d(Tensor(base), k, b, dilation=(4, 4)).data[0, 20, 20]
changed = np.zeros((41, 41), dtype=bool)
for r in range(41):
    for c in range(41):
        bump = base.copy()
        bump[0, r, c] = 1.0
        out = conv2d(Tensor(bump), k, b, dilation=(4, 4)).data[0, 20, 20]
        changed[r, c] = out != ref
rows = np.where(changed.any(axis=1))[0]
print(f"output (20,20) depends on rows {rows.min()}..{rows.max()} "
      f"-> {rows.max() - rows.min() + 1} pixels per axis")
print("footprint mask (every 4th pixel inside 25x25):")
for r in range(16, 25):
    print("   ", "".join(".#"[int(v)] for v in changed[r, 12:29]))
