"""The finite-difference validation suite.

Every primitive op, every adapter flavor, and an end-to-end toy-network
loss are checked against central differences at several random shapes. All
cases run in double precision; reductions go through a fixed random
weighting so that ops whose plain sum has a degenerate gradient (batch
norm: the per-channel sum of normalized values is identically zero) still
get a meaningful signal. Each case's function is deterministic: all
randomness is drawn while building the case, never inside it.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from . import ops
from .adapters import AdapterBlock, AdapterKind, adapter_forward
from .backbone import build_toy_backbone
from .network import (DomainBatch, DomainSpec, InsertionConfig,
                      build_mdl_network, mdl_forward, trainable_params)
from .seeding import derive_rng
from .tensor import GradCheckReport, Tensor, finite_diff_check

DTYPE = np.float64


def _probe_fn(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    """A fixed random weighting that reduces `shape` outputs to a scalar."""
    w = Tensor(rng.standard_normal(shape), dtype=DTYPE)

    def reduce(y: Tensor) -> Tensor:
        return ops.sum_all(ops.mul(y, w))

    return reduce


def _t(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), dtype=DTYPE)


def _clip_shape(rng: np.random.Generator) -> tuple[int, ...]:
    return (int(rng.integers(1, 3)), int(rng.integers(2, 5)),
            int(rng.integers(1, 4)), int(rng.integers(3, 7)),
            int(rng.integers(3, 7)))


def _op_cases(seed: int):
    """Yield (name, f, x) finite-diff cases for one random shape draw."""
    rng = derive_rng(seed, "gradcheck")
    b, t, c, h, w = shape = _clip_shape(rng)
    pr = _probe_fn(rng, shape)

    other = _t(rng, *shape)
    yield "add", (lambda v: pr(ops.add(v, other))), _t(rng, *shape)
    yield "mul", (lambda v: pr(ops.mul(v, other))), _t(rng, *shape)
    yield "scale", (lambda v: pr(ops.scale(v, -1.7))), _t(rng, *shape)
    yield "sum_all", ops.sum_all, _t(rng, *shape)
    yield "relu", (lambda v: pr(ops.relu(v))), _t(rng, *shape)

    for kind, opfn in ((ops.ConvKind.FRAMEWISE_2D, ops.conv_framewise_2d),
                       (ops.ConvKind.FULL_3D, ops.conv_3d),
                       (ops.ConvKind.TEMPORAL_1D, ops.conv_temporal_1d)):
        out_c = int(rng.integers(1, 4))
        kern = ops.ConvKernel.create(kind, c, out_c, bias=True, rng=rng,
                                     dtype=DTYPE)
        cpr = _probe_fn(rng, (b, t, out_c, h, w))
        name = kind.value
        yield (f"{name}/input",
               (lambda v, k=kern, f=opfn, p=cpr: p(f(v, k))),
               _t(rng, *shape))
        fixed = _t(rng, *shape)

        def conv_fixed(v, k=kern, f=opfn, p=cpr, fx=fixed):
            return p(f(fx, k))

        yield f"{name}/weight", conv_fixed, kern.weight
        yield f"{name}/bias", conv_fixed, kern.bias

    bn = ops.NormParams.batch_norm(c, gamma_init=0.8, dtype=DTYPE)
    bn.running_mean = rng.standard_normal(c)
    bn.running_var = rng.uniform(0.5, 2.0, c)
    for mode in ("train", "eval"):
        yield (f"batch_norm[{mode}]/input",
               (lambda v, m=mode, p=pr: p(ops.batch_norm(v, bn, m))),
               _t(rng, *shape))
    bn_in = _t(rng, *shape)

    def bn_fixed(v, p=pr, fx=bn_in):
        return p(ops.batch_norm(fx, bn, "train"))

    yield "batch_norm[train]/gamma", bn_fixed, bn.gamma
    yield "batch_norm[train]/beta", bn_fixed, bn.beta

    ln = ops.NormParams.layer_norm(c, dtype=DTYPE)
    ln.gamma.data[:] = rng.uniform(0.5, 1.5, c)
    yield ("layer_norm/input", (lambda v, p=pr: p(ops.layer_norm(v, ln))),
           _t(rng, *shape))
    ln_in = _t(rng, *shape)

    def ln_fixed(v, p=pr, fx=ln_in):
        return p(ops.layer_norm(fx, ln))

    yield "layer_norm/gamma", ln_fixed, ln.gamma
    yield "layer_norm/beta", ln_fixed, ln.beta

    gpr = _probe_fn(rng, (b, c))
    yield ("global_avg_pool",
           (lambda v, p=gpr: p(ops.global_avg_pool(v))), _t(rng, *shape))
    # odd spatial extents exercise the clipped pooling windows
    ppr = _probe_fn(rng, (b, t, c, (h + 2) // 2, (w + 2) // 2))
    yield ("spatial_pool2x2",
           (lambda v, p=ppr: p(ops.spatial_pool2x2(v))),
           _t(rng, b, t, c, h + 1, w + 1))

    n_cls, width = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    lw = _t(rng, n_cls, width)
    lb = _t(rng, n_cls)
    lpr = _probe_fn(rng, (b, n_cls))
    yield ("linear/input",
           (lambda v, p=lpr: p(ops.linear(v, lw, lb))), _t(rng, b, width))
    lin_in = _t(rng, b, width)

    def lin_fixed(v, p=lpr, fx=lin_in):
        return p(ops.linear(fx, lw, lb))

    yield "linear/weight", lin_fixed, lw
    yield "linear/bias", lin_fixed, lb

    labels = rng.integers(0, n_cls, size=b)
    yield ("softmax_cross_entropy",
           (lambda v: ops.softmax_cross_entropy(v, labels)),
           _t(rng, b, n_cls))


def _adapter_cases(seed: int):
    rng = derive_rng(seed, "gradcheck-adapter")
    b, t, c, h, w = 2, 3, int(rng.integers(2, 4)), 5, 4
    for kind in AdapterKind:
        blk = AdapterBlock.create(kind, c, rng=rng, dtype=DTYPE,
                                  bn_gamma_init=0.6)
        ln = ops.NormParams.layer_norm(c, dtype=DTYPE)
        ln.gamma.data[:] = rng.uniform(0.5, 1.5, c)
        base = f"adapter[{kind.value}]"
        pr = _probe_fn(rng, (b, t, c, h, w))

        def run(v, blk=blk, ln=ln, p=pr):
            return p(adapter_forward(v, blk, ln, "train"))

        yield f"{base}/input", run, _t(rng, b, t, c, h, w)
        fixed = _t(rng, b, t, c, h, w)

        def run_fixed(v, blk=blk, ln=ln, p=pr, fx=fixed):
            return p(adapter_forward(fx, blk, ln, "train"))

        for pname, tensor in blk.param_tensors():
            yield f"{base}/{pname}", run_fixed, tensor
        yield f"{base}/ln_gamma", run_fixed, ln.gamma
        yield f"{base}/ln_beta", run_fixed, ln.beta


def _end_to_end_cases(seed: int):
    """Loss of a small two-domain network wrt a parameter subset."""
    rng = derive_rng(seed, "gradcheck-e2e")
    backbone = build_toy_backbone((2, 3), head_width=4, in_channels=1,
                                  pool_blocks=(2,), seed=seed, dtype=DTYPE)
    domains = [DomainSpec(1, "a", 3), DomainSpec(2, "b", 2)]
    net = build_mdl_network(backbone, domains, AdapterKind.SEPARABLE_ST,
                            InsertionConfig.all(), seed=seed, dtype=DTYPE,
                            bn_gamma_init=0.5)
    clips = Tensor(rng.standard_normal((2, 3, 1, 6, 6)), dtype=DTYPE)
    labels = rng.integers(0, 3, size=2)
    batch = DomainBatch(clips, labels, 1)

    def loss_fn(_v):
        return ops.softmax_cross_entropy(mdl_forward(batch, net, "train"),
                                         batch.labels)

    yield "end_to_end/input", loss_fn, clips
    wanted = ("base/layer1/conv_w", "base/layer2/bn_gamma",
              "adapter/d1/loc1/spatial_w", "adapter/d1/loc2/temporal_w",
              "adapter/d1/loc1/bn_gamma", "head/d1/weight", "head/d1/bias",
              "ln/loc1/gamma")
    by_name = {name: t for _, name, t in trainable_params(net)}
    for name in wanted:
        yield f"end_to_end/{name}", loss_fn, by_name[name]


def run_gradient_suite(*, rtol: float = 1e-4, eps: float = 1e-5,
                       draws: int = 3, max_coords: int = 48,
                       verbose: bool = False,
                       printer: Optional[Callable[[str], None]] = None
                       ) -> list[GradCheckReport]:
    """Run every case at `draws` random shape draws; returns all reports.

    Coordinates per tensor are capped at `max_coords` (random subset beyond
    that) to keep the full suite fast.
    """
    reports = []
    for seed in range(draws):
        sources = [_op_cases(seed), _adapter_cases(seed)]
        if seed == 0:
            sources.append(_end_to_end_cases(seed))
        for source in sources:
            for name, f, x in source:
                rep = finite_diff_check(
                    f, x, eps=eps, rtol=rtol, max_coords=max_coords,
                    rng=derive_rng(seed, "gradcheck-coords", name),
                    name=f"{name}#{seed}")
                reports.append(rep)
                if printer is not None and (verbose or not rep.passed):
                    printer(str(rep))
    return reports
