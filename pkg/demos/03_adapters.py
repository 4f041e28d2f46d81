"""Adapter blocks start as exact identities and cost a closed-form number
of weights.

The block computes LN(ReLU(BN(conv(f)) + f)). BN's scale starts at zero, so
the conv branch contributes nothing at init; with the norm layer passed
through, the output is bit-for-bit the input (on non-negative features,
which is what a backbone hands over after its own ReLU).
"""
import numpy as np

from mdlvideo.adapters import (AdapterBlock, AdapterKind, adapter_forward,
                               adapter_param_count)
from mdlvideo.ops import NormParams
from mdlvideo.tensor import Tensor

rng = np.random.default_rng(7)
channels = 6
feat = Tensor(np.abs(rng.standard_normal((2, 4, channels, 5, 5))))

for kind in AdapterKind:
    blk = AdapterBlock.create(kind, channels, rng=rng, dtype=np.float64)
    ln = NormParams.layer_norm(channels, dtype=np.float64)
    ln.passthrough = True
    out = adapter_forward(feat, blk, ln, "eval")
    print(f"{kind.value:12s} identity at init: "
          f"{np.array_equal(out.data, feat.data)}")

# closed forms per insertion point: conv weights plus the BN pair
print("\nper-location weights (conv + bn), C=6:")
for kind in AdapterKind:
    blk = AdapterBlock.create(kind, channels, rng=rng)
    walked = sum(t.size for _, t in blk.param_tensors())
    print(f"  {kind.value:12s} closed-form {adapter_param_count(kind, channels):4d}"
          f"  walked {walked:4d}")

# turning BN's scale on breaks the identity, as training immediately would
blk = AdapterBlock.create(AdapterKind.SEPARABLE_ST, channels, rng=rng,
                          dtype=np.float64, bn_gamma_init=0.5)
ln = NormParams.layer_norm(channels, dtype=np.float64)
ln.passthrough = True
active = adapter_forward(feat, blk, ln, "eval")
print("\nwith bn gamma = 0.5 the block transforms:",
      not np.array_equal(active.data, feat.data))
