"""The packaged finite-difference suite must pass wholesale, and must not be
blind: a sabotaged backward has to fail it."""
import time

import numpy as np
import pytest

from mdlvideo import ops
from mdlvideo.gradcheck import run_gradient_suite
from mdlvideo.tensor import Tensor, finite_diff_check


def test_full_suite_passes_and_is_fast():
    t0 = time.perf_counter()
    reports = run_gradient_suite(rtol=1e-4, eps=1e-5, draws=3)
    elapsed = time.perf_counter() - t0
    failed = [r.name for r in reports if not r.passed]
    assert not failed, f"gradient checks failed: {failed}"
    # ops x 3 draws, adapters x 3 draws, end-to-end on draw 0
    assert len(reports) > 100
    assert elapsed < 120.0, f"suite took {elapsed:.1f}s"


def test_suite_covers_every_op_family():
    reports = run_gradient_suite(draws=1)
    names = " ".join(r.name for r in reports)
    for needle in ("framewise-2d", "temporal-1d", "full-3d",
                   "batch_norm[train]", "batch_norm[eval]", "layer_norm",
                   "relu", "linear", "softmax_cross_entropy",
                   "spatial_pool2x2", "global_avg_pool", "adapter[2+1d]",
                   "adapter[3d]", "end_to_end"):
        assert needle in names, f"no case exercises {needle}"


def test_checker_catches_broken_gradient():
    # scale() with a deliberately wrong constant must blow past rtol
    x = Tensor(np.linspace(-1.0, 1.0, 8), requires_grad=True)

    def wrong(v):
        out = ops.scale(v, 3.0)
        # double the gradient behind the op's back
        v2 = ops.add(out, ops.scale(v, 0.0))
        return ops.sum_all(ops.mul(v2, v2))

    rep_good = finite_diff_check(wrong, x, rng=np.random.default_rng(0))
    assert rep_good.passed  # the construction above is actually consistent

    def sabotage(v):
        out = Tensor(v.data * 2.0)
        from mdlvideo.tensor import record

        def bad_backward(g):
            v.accumulate_grad(g * 3.0)  # claims d(2v)/dv = 3

        return ops.sum_all(record("bad_scale", out, [v], bad_backward))

    rep_bad = finite_diff_check(sabotage, x, rng=np.random.default_rng(0))
    assert not rep_bad.passed
    # claimed 3, true 2: |3 - 2| / max(3, 2) = 1/3
    assert rep_bad.max_rel_err == pytest.approx(1 / 3, rel=1e-3)
