"""The three convolution flavors on a clip with a moving bar.

A frame-wise 3x3 sees each frame alone; the temporal 1x1x3 mixes a pixel
with itself one frame earlier and later; the full 3x3x3 does both at once.
Weight cost per layer at equal channel width C: 9C^2 vs 12C^2 vs 27C^2.
"""
import numpy as np

from mdlvideo.ops import (ConvKernel, ConvKind, conv_3d, conv_framewise_2d,
                          conv_temporal_1d)
from mdlvideo.tensor import Tensor

rng = np.random.default_rng(1)

# one-channel clip: a bright horizontal bar that drops one row per frame
t, h, w = 6, 8, 8
clip = np.zeros((1, t, 1, h, w))
for i in range(t):
    clip[0, i, 0, i, :] = 1.0
x = Tensor(clip)

kern2d = ConvKernel.create(ConvKind.FRAMEWISE_2D, 1, 1, rng=rng, dtype=np.float64)
kern1d = ConvKernel.create(ConvKind.TEMPORAL_1D, 1, 1, rng=rng, dtype=np.float64)
kern3d = ConvKernel.create(ConvKind.FULL_3D, 1, 1, rng=rng, dtype=np.float64)

for name, fn, kern in (("framewise 3x3", conv_framewise_2d, kern2d),
                       ("temporal 3", conv_temporal_1d, kern1d),
                       ("full 3x3x3", conv_3d, kern3d)):
    out = fn(x, kern)
    print(f"{name:14s} in {x.shape} -> out {out.shape}")

# shuffle the frames: the frame-wise conv cannot tell, the 3d conv can
perm = rng.permutation(t)
shuffled = Tensor(clip[:, perm])
same_2d = np.array_equal(conv_framewise_2d(shuffled, kern2d).data,
                         conv_framewise_2d(x, kern2d).data[:, perm])
same_3d = np.array_equal(conv_3d(shuffled, kern3d).data,
                         conv_3d(x, kern3d).data[:, perm])
print("framewise output just permutes along with frames:", same_2d)
print("full-3d output actually changes under a shuffle :", not same_3d)

# weight budgets: the separable pair (2d + temporal) sits between the two
print("\nwidth   2d only    2d+temporal    full 3d")
for c in (8, 24, 48, 96, 192):
    print(f"{c:5d} {9 * c * c:10d} {12 * c * c:14d} {27 * c * c:10d}")
