"""Neural-network primitives over rank-5 clip tensors.

Clip layout is (batch, time, channel, height, width) everywhere. The three
convolution flavors share one stride-1, zero-padded core and therefore
preserve (T, H, W):

* frame-wise 2D: kernel (1, kh, kw), every frame filtered independently;
* full 3D: kernel (kt, kh, kw), mixes time and space;
* temporal 1D: kernel (kt, 1, 1), mixes time only, per pixel.

Each op computes its output eagerly with numpy and registers a backward
closure on the active tape (see tensor.py). Gradient formulas are written
out locally per op so they can be validated one at a time against central
differences.
"""
from __future__ import annotations

import enum
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, record


class ConvKind(str, enum.Enum):
    FRAMEWISE_2D = "framewise-2d"
    FULL_3D = "full-3d"
    TEMPORAL_1D = "temporal-1d"


# Default kernel extents (kt, kh, kw) per kind.
_DEFAULT_EXTENTS = {
    ConvKind.FRAMEWISE_2D: (1, 3, 3),
    ConvKind.FULL_3D: (3, 3, 3),
    ConvKind.TEMPORAL_1D: (3, 1, 1),
}


class ConvKernel:
    """A convolution weight of shape (out_ch, in_ch, kt, kh, kw), plus kind.

    Extents must be odd so that same-padding keeps shapes. Kind constrains
    the extents: frame-wise needs kt == 1, temporal needs kh == kw == 1.
    Bias is optional (one scalar per output channel) and off by default;
    adapter and backbone convs run bias-free because a batch norm follows.
    """

    def __init__(self, kind: ConvKind, weight: Tensor, bias: Optional[Tensor] = None):
        kind = ConvKind(kind)
        if weight.ndim != 5:
            raise DimensionError("conv-kernel",
                                 f"weight must be rank-5, got {weight.shape}")
        out_ch, in_ch, kt, kh, kw = weight.shape
        for ext, axis in ((kt, "kt"), (kh, "kh"), (kw, "kw")):
            if ext % 2 == 0:
                raise DimensionError("conv-kernel",
                                     f"{axis}={ext} must be odd for same-padding")
        if kind is ConvKind.FRAMEWISE_2D and kt != 1:
            raise DimensionError("conv-kernel",
                                 f"frame-wise kernel needs kt=1, got kt={kt}")
        if kind is ConvKind.TEMPORAL_1D and (kh != 1 or kw != 1):
            raise DimensionError(
                "conv-kernel",
                f"temporal kernel needs kh=kw=1, got ({kh},{kw})")
        if bias is not None and bias.shape != (out_ch,):
            raise DimensionError("conv-kernel",
                                 f"bias must have shape ({out_ch},), got {bias.shape}")
        self.kind = kind
        self.weight = weight
        self.bias = bias
        self.out_channels = out_ch
        self.in_channels = in_ch
        self.k_t, self.k_h, self.k_w = kt, kh, kw

    @classmethod
    def create(cls, kind: ConvKind, in_channels: int, out_channels: int, *,
               extents: Optional[tuple[int, int, int]] = None, bias: bool = False,
               rng: np.random.Generator, dtype=np.float32,
               name: str = "conv") -> "ConvKernel":
        """He-uniform init: weight ~ U(-b, b) with b = sqrt(6 / fan_in)."""
        kind = ConvKind(kind)
        kt, kh, kw = extents if extents is not None else _DEFAULT_EXTENTS[kind]
        fan_in = in_channels * kt * kh * kw
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound,
                        size=(out_channels, in_channels, kt, kh, kw))
        weight = Tensor(w.astype(dtype), requires_grad=True, name=f"{name}_w")
        b = None
        if bias:
            b = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True,
                       name=f"{name}_b")
        return cls(kind, weight, b)

    def param_tensors(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias


def _check_clip(f: Tensor, op: str) -> tuple[int, int, int, int, int]:
    if f.ndim != 5:
        raise DimensionError(op, f"expected (B,T,C,H,W), got rank {f.ndim}")
    return f.shape


def _conv(f: Tensor, kern: ConvKernel, op_name: str) -> Tensor:
    batch, t, ch, h, w = _check_clip(f, op_name)
    if ch != kern.in_channels:
        raise DimensionError(
            op_name,
            f"channel axis has {ch}, kernel expects {kern.in_channels}")
    wt = kern.weight.data
    out_ch = kern.out_channels
    kt, kh, kw = kern.k_t, kern.k_h, kern.k_w
    pt, ph, pw = kt // 2, kh // 2, kw // 2

    # Channels-last padded copy: each tap then reduces to one (N, C) @ (C, O)
    # GEMM over N = B*T*H*W output positions.
    fcl = np.moveaxis(f.data, 2, 4)
    padded = np.zeros((batch, t + 2 * pt, h + 2 * ph, w + 2 * pw, ch),
                      dtype=f.dtype)
    padded[:, pt:pt + t, ph:ph + h, pw:pw + w, :] = fcl

    n = batch * t * h * w
    flat_out = np.zeros((n, out_ch), dtype=f.dtype)
    for dt in range(kt):
        for dh in range(kh):
            for dw in range(kw):
                tap = padded[:, dt:dt + t, dh:dh + h, dw:dw + w, :]
                flat_out += tap.reshape(n, ch) @ wt[:, :, dt, dh, dw].T
    if kern.bias is not None:
        flat_out += kern.bias.data
    out_data = np.ascontiguousarray(
        np.moveaxis(flat_out.reshape(batch, t, h, w, out_ch), 4, 2))
    out = Tensor(out_data, name=op_name)

    def backward_conv(g: np.ndarray) -> None:
        gcl = np.moveaxis(g, 2, 4).reshape(n, out_ch)
        if kern.weight.requires_grad:
            gw = np.empty_like(wt)
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        tap = padded[:, dt:dt + t, dh:dh + h, dw:dw + w, :]
                        gw[:, :, dt, dh, dw] = gcl.T @ tap.reshape(n, ch)
            kern.weight.accumulate_grad(gw)
        if kern.bias is not None and kern.bias.requires_grad:
            kern.bias.accumulate_grad(gcl.sum(axis=0))
        if f.requires_grad:
            gpad = np.zeros_like(padded)
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        contrib = gcl @ wt[:, :, dt, dh, dw]
                        gpad[:, dt:dt + t, dh:dh + h, dw:dw + w, :] += (
                            contrib.reshape(batch, t, h, w, ch))
            gin = gpad[:, pt:pt + t, ph:ph + h, pw:pw + w, :]
            f.accumulate_grad(np.ascontiguousarray(np.moveaxis(gin, 4, 2)))

    inputs = [f, kern.weight] + ([kern.bias] if kern.bias is not None else [])
    return record(op_name, out, inputs, backward_conv)


def conv_framewise_2d(f: Tensor, kern: ConvKernel) -> Tensor:
    """2D conv applied to every frame independently (kernel (1, kh, kw))."""
    if kern.kind is not ConvKind.FRAMEWISE_2D:
        raise ContractError(f"conv_framewise_2d got a {kern.kind.value} kernel")
    return _conv(f, kern, "conv_framewise_2d")


def conv_3d(f: Tensor, kern: ConvKernel) -> Tensor:
    """Full spatio-temporal conv (kernel (kt, kh, kw))."""
    if kern.kind is not ConvKind.FULL_3D:
        raise ContractError(f"conv_3d got a {kern.kind.value} kernel")
    return _conv(f, kern, "conv_3d")


def conv_temporal_1d(f: Tensor, kern: ConvKernel) -> Tensor:
    """Per-pixel conv along time only (kernel (kt, 1, 1))."""
    if kern.kind is not ConvKind.TEMPORAL_1D:
        raise ContractError(f"conv_temporal_1d got a {kern.kind.value} kernel")
    return _conv(f, kern, "conv_temporal_1d")


def dispatch_conv(f: Tensor, kern: ConvKernel) -> Tensor:
    """Apply whichever conv matches the kernel's kind."""
    if kern.kind is ConvKind.FRAMEWISE_2D:
        return conv_framewise_2d(f, kern)
    if kern.kind is ConvKind.FULL_3D:
        return conv_3d(f, kern)
    return conv_temporal_1d(f, kern)


class NormKind(str, enum.Enum):
    BATCH = "batch-norm"
    LAYER = "layer-norm"


class NormParams:
    """Per-channel affine normalization state.

    Batch norm: statistics per channel over (B, T, H, W); training uses batch
    statistics (biased variance) and folds them into running buffers with
    momentum m (r <- (1-m) r + m batch); eval is the deterministic affine map
    from the running buffers. Layer norm: statistics per (sample, frame) over
    (C, H, W); no running state; `passthrough` short-circuits it to identity
    (used to verify that a freshly built adapter leaves features untouched).
    Trainable scalars in either case: gamma and beta, one each per channel.
    """

    def __init__(self, kind: NormKind, gamma: Tensor, beta: Tensor, *,
                 eps: float = 1e-5, momentum: float = 0.1,
                 running_mean: Optional[np.ndarray] = None,
                 running_var: Optional[np.ndarray] = None,
                 passthrough: bool = False):
        kind = NormKind(kind)
        if gamma.ndim != 1 or gamma.shape != beta.shape:
            raise DimensionError(kind.value,
                                 f"gamma/beta must be equal rank-1 shapes, got "
                                 f"{gamma.shape} and {beta.shape}")
        self.kind = kind
        self.gamma = gamma
        self.beta = beta
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.channels = gamma.shape[0]
        if kind is NormKind.BATCH:
            c = self.channels
            self.running_mean = (running_mean if running_mean is not None
                                 else np.zeros(c, dtype=gamma.dtype))
            self.running_var = (running_var if running_var is not None
                                else np.ones(c, dtype=gamma.dtype))
        else:
            self.running_mean = None
            self.running_var = None
        self.passthrough = bool(passthrough)

    @classmethod
    def batch_norm(cls, channels: int, *, gamma_init: float = 1.0,
                   eps: float = 1e-5, momentum: float = 0.1,
                   dtype=np.float32, name: str = "bn") -> "NormParams":
        gamma = Tensor(np.full(channels, gamma_init, dtype=dtype),
                       requires_grad=True, name=f"{name}_gamma")
        beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True,
                      name=f"{name}_beta")
        return cls(NormKind.BATCH, gamma, beta, eps=eps, momentum=momentum)

    @classmethod
    def layer_norm(cls, channels: int, *, eps: float = 1e-5,
                   dtype=np.float32, name: str = "ln") -> "NormParams":
        gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True,
                       name=f"{name}_gamma")
        beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True,
                      name=f"{name}_beta")
        return cls(NormKind.LAYER, gamma, beta, eps=eps)

    def param_tensors(self):
        yield "gamma", self.gamma
        yield "beta", self.beta


def _col(v: np.ndarray) -> np.ndarray:
    # (C,) -> broadcastable over (B, T, C, H, W)
    return v.reshape(1, 1, -1, 1, 1)


def batch_norm(f: Tensor, p: NormParams, mode: str) -> Tensor:
    """Per-channel batch normalization of a clip tensor.

    Training: y = gamma * (x - mu) / sqrt(var + eps) + beta with mu, var the
    biased moments over (B, T, H, W) per channel; running buffers are updated
    as a side effect. Eval: same affine form with the running buffers, a
    per-element map with no cross-sample coupling.
    """
    if p.kind is not NormKind.BATCH:
        raise ContractError("batch_norm needs batch-norm params")
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    batch, t, ch, h, w = _check_clip(f, "batch_norm")
    if ch != p.channels:
        raise DimensionError("batch_norm",
                             f"channel axis has {ch}, params expect {p.channels}")
    x = f.data
    gamma, beta = p.gamma, p.beta
    axes = (0, 1, 3, 4)

    if mode == "train":
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv = 1.0 / np.sqrt(var + p.eps)
        xhat = (x - _col(mu)) * _col(inv)
        y = _col(gamma.data) * xhat + _col(beta.data)
        m = p.momentum
        p.running_mean = ((1.0 - m) * p.running_mean + m * mu).astype(
            p.running_mean.dtype)
        p.running_var = ((1.0 - m) * p.running_var + m * var).astype(
            p.running_var.dtype)
        out = Tensor(y, name="batch_norm")

        def backward_bn_train(g: np.ndarray) -> None:
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xhat).sum(axis=axes))
            if beta.requires_grad:
                beta.accumulate_grad(g.sum(axis=axes))
            if f.requires_grad:
                gxh = g * _col(gamma.data)
                mean_g = gxh.mean(axis=axes)
                mean_gx = (gxh * xhat).mean(axis=axes)
                f.accumulate_grad(
                    _col(inv) * (gxh - _col(mean_g) - xhat * _col(mean_gx)))

        return record("batch_norm", out, [f, gamma, beta], backward_bn_train)

    inv = 1.0 / np.sqrt(p.running_var + p.eps)
    xhat = (x - _col(p.running_mean)) * _col(inv)
    y = _col(gamma.data) * xhat + _col(beta.data)
    out = Tensor(y, name="batch_norm")

    def backward_bn_eval(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=axes))
        if f.requires_grad:
            f.accumulate_grad(g * _col(gamma.data * inv))

    return record("batch_norm", out, [f, gamma, beta], backward_bn_eval)


def layer_norm(f: Tensor, p: NormParams) -> Tensor:
    """Normalize each (sample, frame) slice over (C, H, W), then apply the
    per-channel affine. Independent of batch composition, so train and eval
    behave identically. With `passthrough` set the input is returned as-is.
    """
    if p.kind is not NormKind.LAYER:
        raise ContractError("layer_norm needs layer-norm params")
    if p.passthrough:
        return f
    batch, t, ch, h, w = _check_clip(f, "layer_norm")
    if ch != p.channels:
        raise DimensionError("layer_norm",
                             f"channel axis has {ch}, params expect {p.channels}")
    x = f.data
    gamma, beta = p.gamma, p.beta
    axes = (2, 3, 4)
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + p.eps)
    xhat = (x - mu) * inv
    y = _col(gamma.data) * xhat + _col(beta.data)
    out = Tensor(y, name="layer_norm")

    def backward_ln(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 1, 3, 4)))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 1, 3, 4)))
        if f.requires_grad:
            gxh = g * _col(gamma.data)
            mean_g = gxh.mean(axis=axes, keepdims=True)
            mean_gx = (gxh * xhat).mean(axis=axes, keepdims=True)
            f.accumulate_grad(inv * (gxh - mean_g - xhat * mean_gx))

    return record("layer_norm", out, [f, gamma, beta], backward_ln)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)
    out = Tensor(y, name="relu")

    def backward_relu(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    return record("relu", out, [x], backward_relu)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two equal-shape tensors (the residual join)."""
    if a.shape != b.shape:
        raise DimensionError("add", f"shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, name="add")

    def backward_add(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return record("add", out, [a, b], backward_add)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equal-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError("mul", f"shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, name="mul")

    def backward_mul(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return record("mul", out, [a, b], backward_mul)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)
    out = Tensor(x.data * c, name="scale")

    def backward_scale(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * c)

    return record("scale", out, [x], backward_scale)


def sum_all(x: Tensor) -> Tensor:
    """Reduce every element to one scalar."""
    out = Tensor(np.asarray(x.data.sum()), name="sum_all")

    def backward_sum(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g, x.shape))

    return record("sum_all", out, [x], backward_sum)


def global_avg_pool(f: Tensor) -> Tensor:
    """(B, T, C, H, W) -> (B, C) mean over time and space."""
    batch, t, ch, h, w = _check_clip(f, "global_avg_pool")
    count = t * h * w
    out = Tensor(f.data.mean(axis=(1, 3, 4)), name="global_avg_pool")

    def backward_gap(g: np.ndarray) -> None:
        if f.requires_grad:
            f.accumulate_grad(
                np.broadcast_to(g[:, None, :, None, None] / count, f.shape))

    return record("global_avg_pool", out, [f], backward_gap)


def spatial_pool2x2(f: Tensor) -> Tensor:
    """Average-pool H and W by 2 with clipped windows (odd tails keep their
    single element), so H -> ceil(H/2), W -> ceil(W/2); T untouched."""
    batch, t, ch, h, w = _check_clip(f, "spatial_pool2x2")
    h_idx = np.arange(0, h, 2)
    w_idx = np.arange(0, w, 2)
    h_counts = np.diff(np.append(h_idx, h))
    w_counts = np.diff(np.append(w_idx, w))
    sums = np.add.reduceat(np.add.reduceat(f.data, h_idx, axis=3), w_idx, axis=4)
    denom = h_counts[:, None] * w_counts[None, :]
    y = sums / denom
    out = Tensor(y, name="spatial_pool2x2")

    def backward_pool(g: np.ndarray) -> None:
        if f.requires_grad:
            spread = np.repeat(np.repeat(g / denom, h_counts, axis=3),
                               w_counts, axis=4)
            f.accumulate_grad(spread)

    return record("spatial_pool2x2", out, [f], backward_pool)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """(B, F) @ (N, F)^T + (N,) -> (B, N): the classification head."""
    if x.ndim != 2:
        raise DimensionError("linear", f"input must be (B, F), got {x.shape}")
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise DimensionError(
            "linear",
            f"weight must be (N, {x.shape[1]}), got {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError("linear",
                             f"bias must be ({weight.shape[0]},), got {bias.shape}")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor(y, name="linear")

    def backward_linear(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data)
        if weight.requires_grad:
            weight.accumulate_grad(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return record("linear", out, inputs, backward_linear)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array, stabilized by max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label].

    Log-probabilities are computed as (z - max) - logsumexp(z - max) so large
    logits cannot overflow. Labels must be integers in [0, N).
    """
    if logits.ndim != 2:
        raise DimensionError("softmax_cross_entropy",
                             f"logits must be (B, N), got {logits.shape}")
    batch, n_classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ContractError(
            f"labels must have shape ({batch},), got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ContractError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ContractError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(batch)
    loss = -log_z[rows, labels].mean()
    out = Tensor(np.asarray(loss, dtype=logits.dtype), name="softmax_cross_entropy")

    def backward_ce(g: np.ndarray) -> None:
        if logits.requires_grad:
            grad = np.exp(log_z)
            grad[rows, labels] -= 1.0
            logits.accumulate_grad(grad * (np.asarray(g).reshape(()) / batch))

    return record("softmax_cross_entropy", out, [logits], backward_ce)
