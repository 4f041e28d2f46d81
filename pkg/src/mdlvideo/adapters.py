"""Per-domain adapter blocks and the banks that hold them.

An adapter is a residual unit inserted between backbone layers:

    g = LN(ReLU(BN(conv(f)) + f))

The conv path never changes the channel count and comes in three flavors
that trade temporal capacity for parameters at width C:

* frame-wise 2D, 3x3:                    9 C^2 + 2 C trainable scalars
* separable (2+1)D, 3x3 then kt=3:      12 C^2 + 2 C
* full 3D, 3x3x3:                       27 C^2 + 2 C

The +2C is the batch norm's gamma/beta; convs carry no bias. The closing
layer norm is shared across domains at each insertion location and owned by
the network, not the block, so its 2C scalars are counted once, not per
domain.

At build time the batch norm's gamma is zero, which makes the conv path
vanish: the block then returns ReLU(f), the identity on the non-negative
activations the backbone emits. Training moves gamma off zero and the conv
path fades in.
"""
from __future__ import annotations

import enum
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .ops import (ConvKernel, ConvKind, NormParams, add, batch_norm,
                  conv_framewise_2d, conv_3d, conv_temporal_1d, layer_norm,
                  relu)
from .seeding import derive_rng
from .tensor import Tensor


class AdapterKind(str, enum.Enum):
    FRAMEWISE_2D = "2d"
    SEPARABLE_ST = "2+1d"
    FULL_3D = "3d"

    @classmethod
    def parse(cls, text: str) -> "AdapterKind":
        key = text.strip().lower().replace("(", "").replace(")", "")
        aliases = {
            "2d": cls.FRAMEWISE_2D,
            "2+1d": cls.SEPARABLE_ST,
            "2p1d": cls.SEPARABLE_ST,
            "3d": cls.FULL_3D,
        }
        if key not in aliases:
            raise ConfigError(f"unknown adapter kind {text!r}; "
                              f"expected one of 2d, 2+1d, 3d")
        return aliases[key]


def adapter_param_count(kind: AdapterKind, channels: int) -> int:
    """Closed-form trainable-scalar count of one block at width `channels`.

    Derivation: a k_t x k_h x k_w conv mapping C -> C channels with no bias
    holds C * C * k_t * k_h * k_w weights; batch norm adds gamma and beta,
    one per channel. The separable flavor stacks a 3x3 spatial and a kt=3
    temporal conv, both C -> C with no mid-channel expansion.
    """
    c = int(channels)
    body = {
        AdapterKind.FRAMEWISE_2D: 9 * c * c,
        AdapterKind.SEPARABLE_ST: 12 * c * c,
        AdapterKind.FULL_3D: 27 * c * c,
    }[AdapterKind(kind)]
    return body + 2 * c


class AdapterBlock:
    """One residual adapter at a fixed channel width."""

    def __init__(self, kind: AdapterKind, channels: int,
                 convs: tuple[ConvKernel, ...], bn: NormParams):
        self.kind = AdapterKind(kind)
        self.channels = int(channels)
        self.convs = convs
        self.bn = bn

    @classmethod
    def create(cls, kind: AdapterKind, channels: int, *,
               rng: np.random.Generator, dtype=np.float32,
               bn_gamma_init: float = 0.0) -> "AdapterBlock":
        kind = AdapterKind(kind)
        if kind is AdapterKind.FRAMEWISE_2D:
            convs = (ConvKernel.create(ConvKind.FRAMEWISE_2D, channels, channels,
                                       rng=rng, dtype=dtype, name="spatial"),)
        elif kind is AdapterKind.SEPARABLE_ST:
            convs = (ConvKernel.create(ConvKind.FRAMEWISE_2D, channels, channels,
                                       rng=rng, dtype=dtype, name="spatial"),
                     ConvKernel.create(ConvKind.TEMPORAL_1D, channels, channels,
                                       rng=rng, dtype=dtype, name="temporal"))
        else:
            convs = (ConvKernel.create(ConvKind.FULL_3D, channels, channels,
                                       rng=rng, dtype=dtype, name="full3d"),)
        bn = NormParams.batch_norm(channels, gamma_init=bn_gamma_init, dtype=dtype)
        return cls(kind, channels, convs, bn)

    def conv_path(self, f: Tensor) -> Tensor:
        if self.kind is AdapterKind.FRAMEWISE_2D:
            return conv_framewise_2d(f, self.convs[0])
        if self.kind is AdapterKind.SEPARABLE_ST:
            return conv_temporal_1d(conv_framewise_2d(f, self.convs[0]),
                                    self.convs[1])
        return conv_3d(f, self.convs[0])

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        if len(self.convs) == 1:
            yield "conv_w", self.convs[0].weight
        else:
            yield "spatial_w", self.convs[0].weight
            yield "temporal_w", self.convs[1].weight
        yield "bn_gamma", self.bn.gamma
        yield "bn_beta", self.bn.beta


def count_params(blk: AdapterBlock) -> int:
    """Trainable scalars in one block, from the closed form (the generic
    walker over actual tensor shapes must agree; see param auditing)."""
    return adapter_param_count(blk.kind, blk.channels)


def adapter_forward(f: Tensor, blk: AdapterBlock, ln: Optional[NormParams],
                    mode: str) -> Tensor:
    """Run one adapter: conv path, BN, residual add, ReLU, then the shared
    per-location layer norm when one is given (multi-head setups pass None)."""
    if f.ndim != 5 or f.shape[2] != blk.channels:
        raise DimensionError(
            "adapter_forward",
            f"expected (B,T,{blk.channels},H,W), got {f.shape}")
    h = blk.conv_path(f)
    h = batch_norm(h, blk.bn, mode)
    h = relu(add(h, f))
    if ln is not None:
        h = layer_norm(h, ln)
    return h


class AdapterBank:
    """All adapters one domain owns, keyed by insertion location."""

    def __init__(self, domain_id: int, kind: AdapterKind,
                 blocks: dict[int, AdapterBlock]):
        self.domain_id = int(domain_id)
        self.kind = AdapterKind(kind)
        self.blocks = dict(sorted(blocks.items()))

    @property
    def locations(self) -> tuple[int, ...]:
        return tuple(self.blocks.keys())

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for loc, blk in self.blocks.items():
            for tname, t in blk.param_tensors():
                yield f"loc{loc}/{tname}", t

    def param_count(self) -> int:
        return sum(count_params(blk) for blk in self.blocks.values())


def build_bank(domain_id: int, channels_at: dict[int, int], kind: AdapterKind,
               locations, *, seed: int, dtype=np.float32,
               bn_gamma_init: float = 0.0) -> AdapterBank:
    """Create one domain's bank of adapters.

    `channels_at` maps every legal insertion location to its feature width;
    asking for a location outside that map is a config error. Each block
    draws its init from a stream keyed by (seed, domain_id, location), so a
    domain's parameters do not depend on which other domains exist.
    """
    kind = AdapterKind(kind)
    blocks: dict[int, AdapterBlock] = {}
    for loc in sorted(locations):
        if loc not in channels_at:
            raise ConfigError(
                f"insertion location {loc} is outside the valid range "
                f"{sorted(channels_at)}")
        rng = derive_rng(seed, "adapter", domain_id, loc)
        blocks[loc] = AdapterBlock.create(kind, channels_at[loc], rng=rng,
                                          dtype=dtype,
                                          bn_gamma_init=bn_gamma_init)
    return AdapterBank(domain_id, kind, blocks)


class SharedPostNorm:
    """The domain-independent layer norms, one per active insertion location."""

    def __init__(self, norms: dict[int, NormParams]):
        self.norms = dict(sorted(norms.items()))

    @classmethod
    def create(cls, channels_at: dict[int, int], locations, *,
               dtype=np.float32) -> "SharedPostNorm":
        norms = {}
        for loc in sorted(locations):
            if loc not in channels_at:
                raise ConfigError(
                    f"insertion location {loc} is outside the valid range "
                    f"{sorted(channels_at)}")
            norms[loc] = NormParams.layer_norm(channels_at[loc], dtype=dtype)
        return cls(norms)

    def set_passthrough(self, flag: bool) -> None:
        for p in self.norms.values():
            p.passthrough = bool(flag)

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for loc, p in self.norms.items():
            yield f"loc{loc}/gamma", p.gamma
            yield f"loc{loc}/beta", p.beta

    def param_count(self) -> int:
        return sum(p.gamma.size + p.beta.size for p in self.norms.values())
