"""Shared feature backbones and the routed forward pass through them.

A backbone is an ordered stack of L slots: slots 1..L-1 are feature blocks
(conv + BN + ReLU, with 2x2 spatial average pooling at the pyramid stages),
slot L is global average pooling plus a per-domain linear head. Adapters may
be inserted after any of slots 1..L-2, i.e. everywhere except after the last
feature block and the head.

Two backbones matter here:

* reference channel layouts (e.g. the X3D-M layout used for parameter
  audits), described only by a ChannelSpec since their weights are never
  instantiated;
* a small trainable stack for experiments, built by `build_toy_backbone`.

The toy stack defaults to temporal kernel extent 1, so the backbone alone
cannot see frame order and the time axis is mixed only where adapters (or a
larger `temporal_kernel`) say so. That keeps motion-vs-appearance
experiments honest: temporal capacity lives exactly where it is configured.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .adapters import AdapterBank, SharedPostNorm, adapter_forward
from .errors import ConfigError, DimensionError
from .ops import (ConvKernel, ConvKind, NormParams, batch_norm, dispatch_conv,
                  global_avg_pool, linear, relu, spatial_pool2x2)
from .seeding import derive_rng
from .tensor import Tensor


@dataclass(frozen=True)
class ChannelSpec:
    """Channel geometry a backbone exposes to adapters and audits.

    `channels[i]` is the feature width after block i+1, covering insertion
    locations 1..L-2; `head_width` is the pooled feature width entering the
    heads.
    """
    name: str
    channels: tuple[int, ...]
    head_width: int

    @property
    def num_locations(self) -> int:
        return len(self.channels)

    @property
    def layer_count(self) -> int:
        return len(self.channels) + 2

    def channels_at(self, loc: int) -> int:
        if not 1 <= loc <= self.num_locations:
            raise ConfigError(
                f"location {loc} outside 1..{self.num_locations} "
                f"for backbone {self.name!r}")
        return self.channels[loc - 1]

    def channel_map(self) -> dict[int, int]:
        return {loc: c for loc, c in enumerate(self.channels, start=1)}


def x3dm_channel_spec() -> ChannelSpec:
    """The X3D-M layout: widths 24, 24, 48, 96, 192 at the five insertion
    locations and a 2048-wide head feature."""
    return ChannelSpec("x3d-m", (24, 24, 48, 96, 192), 2048)


class BackboneBlock:
    """One feature slot: conv -> BN -> ReLU, optionally followed by 2x2
    spatial pooling."""

    def __init__(self, conv: ConvKernel, bn: NormParams, pool: bool):
        self.conv = conv
        self.bn = bn
        self.pool = bool(pool)

    @property
    def out_channels(self) -> int:
        return self.conv.out_channels

    def forward(self, x: Tensor, mode: str) -> Tensor:
        h = relu(batch_norm(dispatch_conv(x, self.conv), self.bn, mode))
        if self.pool:
            h = spatial_pool2x2(h)
        return h

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "conv_w", self.conv.weight
        if self.conv.bias is not None:
            yield "conv_b", self.conv.bias
        yield "bn_gamma", self.bn.gamma
        yield "bn_beta", self.bn.beta


class Head:
    """Per-domain linear classifier over the pooled feature."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise DimensionError("head", f"weight {weight.shape} / bias "
                                         f"{bias.shape} mismatch")
        self.weight = weight
        self.bias = bias
        self.num_classes = weight.shape[0]
        self.in_width = weight.shape[1]

    @classmethod
    def create(cls, num_classes: int, in_width: int, *,
               rng: np.random.Generator, dtype=np.float32) -> "Head":
        bound = np.sqrt(6.0 / in_width)
        w = rng.uniform(-bound, bound, size=(num_classes, in_width))
        weight = Tensor(w.astype(dtype), requires_grad=True, name="head_w")
        bias = Tensor(np.zeros(num_classes, dtype=dtype), requires_grad=True,
                      name="head_b")
        return cls(weight, bias)

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "weight", self.weight
        yield "bias", self.bias

    def param_count(self) -> int:
        # N x F weights plus N biases.
        return self.weight.size + self.bias.size


class LayerStack:
    """A concrete backbone: L-1 feature blocks plus the pool+head slot."""

    def __init__(self, blocks: list[BackboneBlock], in_channels: int,
                 name: str = "toy"):
        if len(blocks) < 2:
            raise ConfigError("a backbone needs at least 2 feature blocks")
        self.blocks = list(blocks)
        self.in_channels = int(in_channels)
        self.name = name

    @property
    def layer_count(self) -> int:
        return len(self.blocks) + 1

    @property
    def head_width(self) -> int:
        return self.blocks[-1].out_channels

    @property
    def insertion_locations(self) -> tuple[int, ...]:
        return tuple(range(1, self.layer_count - 1))

    def channels_at(self, loc: int) -> int:
        if loc not in self.insertion_locations:
            raise ConfigError(f"location {loc} outside "
                              f"{self.insertion_locations}")
        return self.blocks[loc - 1].out_channels

    def channel_map(self) -> dict[int, int]:
        return {loc: self.channels_at(loc) for loc in self.insertion_locations}

    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(self.name,
                           tuple(self.channels_at(l)
                                 for l in self.insertion_locations),
                           self.head_width)

    def param_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for i, blk in enumerate(self.blocks, start=1):
            for tname, t in blk.param_tensors():
                yield f"layer{i}/{tname}", t

    def param_count(self) -> int:
        return sum(t.size for _, t in self.param_tensors())

    def set_requires_grad(self, flag: bool) -> None:
        for _, t in self.param_tensors():
            t.requires_grad = bool(flag)


def build_toy_backbone(widths: tuple[int, ...] = (8, 8, 16, 32, 64),
                       head_width: int = 128, in_channels: int = 1, *,
                       temporal_kernel: int = 1,
                       pool_blocks: tuple[int, ...] = (2, 3, 4, 5),
                       seed: int = 0, dtype=np.float32) -> LayerStack:
    """A small trainable stack: len(widths)+1 conv blocks, so insertion
    locations 1..len(widths) carry the given widths and the final block
    produces the head feature.

    `temporal_kernel` is the conv extent along time for every block (1 =
    frame-wise; 3 = full spatio-temporal). Spatial extent is fixed at 3x3
    and downsampling happens by average pooling after `pool_blocks`.
    """
    if len(widths) < 1:
        raise ConfigError("need at least one insertion width")
    if temporal_kernel % 2 == 0:
        raise ConfigError(f"temporal_kernel must be odd, got {temporal_kernel}")
    kind = ConvKind.FRAMEWISE_2D if temporal_kernel == 1 else ConvKind.FULL_3D
    blocks = []
    chain = [in_channels, *widths, head_width]
    for i in range(len(chain) - 1):
        rng = derive_rng(seed, "backbone", i + 1)
        conv = ConvKernel.create(kind, chain[i], chain[i + 1],
                                 extents=(temporal_kernel, 3, 3),
                                 rng=rng, dtype=dtype, name=f"layer{i + 1}")
        bn = NormParams.batch_norm(chain[i + 1], dtype=dtype)
        blocks.append(BackboneBlock(conv, bn, pool=(i + 1) in pool_blocks))
    return LayerStack(blocks, in_channels)


def stack_forward(x: Tensor, stack: LayerStack,
                  bank: Optional[AdapterBank],
                  post_norms: Optional[SharedPostNorm],
                  head: Head, mode: str = "train") -> Tensor:
    """Forward a clip batch through the stack with one domain's adapters.

    After block l (for l in 1..L-2) the domain's adapter at l runs if the
    bank has one, followed by the shared layer norm at l. Locations the bank
    does not populate are passed through untouched. Returns (B, num_classes)
    logits.
    """
    if x.ndim != 5 or x.shape[2] != stack.in_channels:
        raise DimensionError(
            "stack_forward",
            f"expected (B,T,{stack.in_channels},H,W), got {x.shape}")
    valid = set(stack.insertion_locations)
    if bank is not None:
        extra = set(bank.locations) - valid
        if extra:
            raise ConfigError(f"adapter locations {sorted(extra)} outside "
                              f"valid {sorted(valid)}")
        if post_norms is None and bank.blocks:
            raise ConfigError("adapters present but no shared post-norms given")
        if post_norms is not None:
            missing = set(bank.locations) - set(post_norms.norms)
            if missing:
                raise ConfigError(
                    f"no shared post-norm at locations {sorted(missing)}")
    h = x
    last = len(stack.blocks)
    for i, blk in enumerate(stack.blocks, start=1):
        h = blk.forward(h, mode)
        if i < last and bank is not None and i in bank.blocks:
            h = adapter_forward(h, bank.blocks[i], post_norms.norms[i], mode)
    pooled = global_avg_pool(h)
    if head.in_width != stack.head_width:
        raise DimensionError("stack_forward",
                             f"head expects width {head.in_width}, backbone "
                             f"produces {stack.head_width}")
    return linear(pooled, head.weight, head.bias)
