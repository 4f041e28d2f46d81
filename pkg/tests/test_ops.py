"""Primitive-op forward values against independent brute-force oracles.

The oracles here are deliberately naive (nested python loops, high-precision
arithmetic) and share no code with the fast paths they validate.
"""
import numpy as np
import pytest

from mdlvideo import ops
from mdlvideo.errors import ContractError, DimensionError
from mdlvideo.tensor import Tensor


def conv_oracle(x, w, bias=None):
    """Seven explicit loops over output positions and kernel taps."""
    nb, nt, nc, nh, nw = x.shape
    no, nci, kt, kh, kw = w.shape
    assert nc == nci
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    out = np.zeros((nb, nt, no, nh, nw))
    for b in range(nb):
        for t in range(nt):
            for o in range(no):
                for y in range(nh):
                    for z in range(nw):
                        acc = 0.0
                        for c in range(nc):
                            for dt in range(kt):
                                for dy in range(kh):
                                    for dz in range(kw):
                                        ts = t + dt - pt
                                        ys = y + dy - ph
                                        zs = z + dz - pw
                                        if (0 <= ts < nt and 0 <= ys < nh
                                                and 0 <= zs < nw):
                                            acc += (x[b, ts, c, ys, zs]
                                                    * w[o, c, dt, dy, dz])
                        out[b, t, o, y, z] = acc + (
                            bias[o] if bias is not None else 0.0)
    return out


def random_kernel(rng, kind, c_in, c_out, bias=False):
    return ops.ConvKernel.create(kind, c_in, c_out, bias=bias, rng=rng,
                                 dtype=np.float64)


@pytest.mark.parametrize("kind,opfn", [
    (ops.ConvKind.FRAMEWISE_2D, ops.conv_framewise_2d),
    (ops.ConvKind.FULL_3D, ops.conv_3d),
    (ops.ConvKind.TEMPORAL_1D, ops.conv_temporal_1d),
])
def test_conv_matches_bruteforce(kind, opfn):
    rng = np.random.default_rng(hash(kind.value) % 2**32)
    for trial in range(4):
        nb = int(rng.integers(1, 3))
        nt = int(rng.integers(1, 5))
        nc = int(rng.integers(1, 5))
        nh = int(rng.integers(1, 7))
        nw = int(rng.integers(1, 7))
        no = int(rng.integers(1, 4))
        kern = random_kernel(rng, kind, nc, no, bias=bool(trial % 2))
        x = Tensor(rng.standard_normal((nb, nt, nc, nh, nw)))
        got = opfn(x, kern).data
        want = conv_oracle(x.data, kern.weight.data,
                           None if kern.bias is None else kern.bias.data)
        assert np.max(np.abs(got - want)) <= 1e-12


def test_framewise_conv_is_frame_independent():
    # permuting input frames permutes outputs identically
    rng = np.random.default_rng(11)
    kern = random_kernel(rng, ops.ConvKind.FRAMEWISE_2D, 2, 3)
    x = rng.standard_normal((1, 5, 2, 6, 6))
    perm = rng.permutation(5)
    out = ops.conv_framewise_2d(Tensor(x), kern).data
    out_perm = ops.conv_framewise_2d(Tensor(x[:, perm]), kern).data
    np.testing.assert_array_equal(out[:, perm], out_perm)


def test_temporal_conv_is_pixel_independent():
    # zeroing every other pixel never leaks into neighbors
    rng = np.random.default_rng(12)
    kern = random_kernel(rng, ops.ConvKind.TEMPORAL_1D, 1, 1)
    x = rng.standard_normal((1, 6, 1, 4, 4))
    masked = x.copy()
    masked[..., 1::2] = 0.0
    out = ops.conv_temporal_1d(Tensor(x), kern).data
    out_masked = ops.conv_temporal_1d(Tensor(masked), kern).data
    np.testing.assert_array_equal(out[..., 0::2], out_masked[..., 0::2])
    assert np.all(out_masked[..., 1::2] == 0.0)


def test_conv_rejects_channel_mismatch_and_wrong_kind():
    rng = np.random.default_rng(13)
    kern = random_kernel(rng, ops.ConvKind.FULL_3D, 3, 2)
    with pytest.raises(DimensionError):
        ops.conv_3d(Tensor(np.zeros((1, 2, 4, 5, 5))), kern)
    with pytest.raises(ContractError):
        ops.conv_framewise_2d(Tensor(np.zeros((1, 2, 3, 5, 5))), kern)


def test_conv_kernel_shape_validation():
    with pytest.raises(DimensionError):  # even extent
        ops.ConvKernel(ops.ConvKind.FULL_3D, Tensor(np.zeros((2, 2, 2, 3, 3))))
    with pytest.raises(DimensionError):  # framewise with kt>1
        ops.ConvKernel(ops.ConvKind.FRAMEWISE_2D,
                       Tensor(np.zeros((2, 2, 3, 3, 3))))
    with pytest.raises(DimensionError):  # temporal with spatial extent
        ops.ConvKernel(ops.ConvKind.TEMPORAL_1D,
                       Tensor(np.zeros((2, 2, 3, 3, 1))))


def bn_train_oracle(x, gamma, beta, eps):
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        sl = x[:, :, c]
        mu = sl.mean()
        var = sl.var()
        out[:, :, c] = gamma[c] * (sl - mu) / np.sqrt(var + eps) + beta[c]
    return out


def test_batch_norm_train_matches_oracle():
    rng = np.random.default_rng(20)
    x = rng.standard_normal((2, 3, 4, 5, 5))
    p = ops.NormParams.batch_norm(4, dtype=np.float64)
    p.gamma.data[:] = rng.uniform(0.5, 2.0, 4)
    p.beta.data[:] = rng.standard_normal(4)
    got = ops.batch_norm(Tensor(x), p, "train").data
    want = bn_train_oracle(x, p.gamma.data, p.beta.data, p.eps)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
    # normalized output: per-channel mean 0, var 1 (before affine)
    p2 = ops.NormParams.batch_norm(4, dtype=np.float64)
    y = ops.batch_norm(Tensor(x), p2, "train").data
    assert np.allclose(y.mean(axis=(0, 1, 3, 4)), 0.0, atol=1e-12)
    assert np.allclose(y.var(axis=(0, 1, 3, 4)), 1.0, atol=1e-4)


def test_batch_norm_running_stats_and_eval():
    rng = np.random.default_rng(21)
    p = ops.NormParams.batch_norm(3, dtype=np.float64)
    assert np.array_equal(p.running_mean, np.zeros(3))
    assert np.array_equal(p.running_var, np.ones(3))
    x1 = rng.standard_normal((2, 2, 3, 4, 4)) + 2.0
    ops.batch_norm(Tensor(x1), p, "train")
    mu1 = x1.mean(axis=(0, 1, 3, 4))
    var1 = x1.var(axis=(0, 1, 3, 4))
    np.testing.assert_allclose(p.running_mean, 0.9 * 0 + 0.1 * mu1,
                               rtol=1e-12)
    np.testing.assert_allclose(p.running_var, 0.9 * 1 + 0.1 * var1,
                               rtol=1e-12)
    # eval: the affine map from running stats, per element
    x2 = rng.standard_normal((1, 2, 3, 4, 4))
    got = ops.batch_norm(Tensor(x2), p, "eval").data
    want = (x2 - p.running_mean.reshape(1, 1, 3, 1, 1)) / np.sqrt(
        p.running_var.reshape(1, 1, 3, 1, 1) + p.eps)
    np.testing.assert_allclose(got, want, rtol=1e-12)
    # eval must not touch the running stats
    rm = p.running_mean.copy()
    ops.batch_norm(Tensor(x2), p, "eval")
    np.testing.assert_array_equal(p.running_mean, rm)


def ln_oracle(x, gamma, beta, eps):
    out = np.empty_like(x)
    nb, nt = x.shape[:2]
    for b in range(nb):
        for t in range(nt):
            sl = x[b, t]
            mu = sl.mean()
            var = sl.var()
            xhat = (sl - mu) / np.sqrt(var + eps)
            out[b, t] = gamma[:, None, None] * xhat + beta[:, None, None]
    return out


def test_layer_norm_matches_oracle():
    rng = np.random.default_rng(22)
    x = rng.standard_normal((2, 3, 4, 3, 5)) * 3 + 1
    p = ops.NormParams.layer_norm(4, dtype=np.float64)
    p.gamma.data[:] = rng.uniform(0.5, 2.0, 4)
    p.beta.data[:] = rng.standard_normal(4)
    got = ops.layer_norm(Tensor(x), p).data
    want = ln_oracle(x, p.gamma.data, p.beta.data, p.eps)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_layer_norm_is_batch_independent():
    rng = np.random.default_rng(23)
    x = rng.standard_normal((3, 2, 2, 4, 4))
    p = ops.NormParams.layer_norm(2, dtype=np.float64)
    full = ops.layer_norm(Tensor(x), p).data
    solo = ops.layer_norm(Tensor(x[1:2]), p).data
    np.testing.assert_array_equal(full[1:2], solo)


def test_layer_norm_passthrough_returns_same_tensor():
    p = ops.NormParams.layer_norm(2)
    p.passthrough = True
    x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 2, 3, 3)))
    assert ops.layer_norm(x, p) is x


def test_global_avg_pool_matches_mean():
    rng = np.random.default_rng(24)
    x = rng.standard_normal((2, 3, 5, 4, 6))
    got = ops.global_avg_pool(Tensor(x)).data
    np.testing.assert_allclose(got, x.mean(axis=(1, 3, 4)), rtol=1e-12)


@pytest.mark.parametrize("nh,nw", [(4, 6), (5, 5), (3, 4), (1, 1)])
def test_spatial_pool_matches_window_oracle(nh, nw):
    rng = np.random.default_rng(25)
    x = rng.standard_normal((2, 2, 3, nh, nw))
    got = ops.spatial_pool2x2(Tensor(x)).data
    oh, ow = (nh + 1) // 2, (nw + 1) // 2
    assert got.shape == (2, 2, 3, oh, ow)
    for y in range(oh):
        for z in range(ow):
            block = x[:, :, :, 2 * y:2 * y + 2, 2 * z:2 * z + 2]
            np.testing.assert_allclose(got[:, :, :, y, z],
                                       block.mean(axis=(3, 4)), rtol=1e-12)


def test_linear_matches_matmul():
    rng = np.random.default_rng(26)
    x = rng.standard_normal((4, 7))
    w = rng.standard_normal((3, 7))
    b = rng.standard_normal(3)
    got = ops.linear(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, x @ w.T + b, rtol=1e-12)
    with pytest.raises(DimensionError):
        ops.linear(Tensor(x), Tensor(rng.standard_normal((3, 6))))


def test_softmax_cross_entropy_against_mpmath():
    from mpmath import mp, mpf

    mp.dps = 50
    rng = np.random.default_rng(27)
    logits = rng.standard_normal((5, 7)) * 3
    labels = rng.integers(0, 7, size=5)

    total = mpf(0)
    for i in range(5):
        row = [mpf(float(v)) for v in logits[i]]
        denom = sum(mp.e ** v for v in row)
        total += -mp.log(mp.e ** row[labels[i]] / denom)
    want = float(total / 5)

    got = ops.softmax_cross_entropy(Tensor(logits), labels).item()
    assert abs(got - want) / abs(want) < 1e-12


def test_softmax_cross_entropy_extreme_logits_stable():
    logits = np.array([[1000.0, -1000.0, 0.0], [-2000.0, 2000.0, 1999.0]])
    labels = np.array([0, 1])
    got = ops.softmax_cross_entropy(Tensor(logits), labels).item()
    assert np.isfinite(got)
    # row 0 is certain; row 1: -log(e^2000/(e^2000+e^1999+e^-2000))
    want = -np.log(1.0 / (1.0 + np.exp(-1.0)))
    assert got == pytest.approx(want / 2, rel=1e-9)


def test_softmax_cross_entropy_rejects_bad_labels():
    logits = Tensor(np.zeros((2, 3)))
    with pytest.raises(ContractError):
        ops.softmax_cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(ContractError):
        ops.softmax_cross_entropy(logits, np.array([-1, 0]))
    with pytest.raises(ContractError):
        ops.softmax_cross_entropy(logits, np.array([0.5, 1.0]))


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    with pytest.raises(DimensionError):
        ops.mul(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


def test_softmax_probs_rows_sum_to_one():
    rng = np.random.default_rng(28)
    p = ops.softmax_probs(rng.standard_normal((6, 9)) * 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-12)
    assert p.min() >= 0
