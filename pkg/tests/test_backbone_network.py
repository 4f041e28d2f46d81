"""Backbone stacks, insertion-config resolution, routed forwards, and
checkpoint round trips."""
import numpy as np
import pytest

from mdlvideo.adapters import AdapterKind
from mdlvideo.backbone import (build_toy_backbone, stack_forward,
                               x3dm_channel_spec)
from mdlvideo.errors import (ConfigError, ContractError, DimensionError,
                             RoutingError)
from mdlvideo.network import (DomainBatch, DomainSpec, InsertionConfig,
                              build_mdl_network, load_checkpoint, mdl_forward,
                              save_checkpoint, trainable_params)
from mdlvideo.ops import softmax_cross_entropy
from mdlvideo.tensor import Tensor, active_tape, backward


@pytest.fixture(autouse=True)
def fresh_tape():
    active_tape().clear()
    yield
    active_tape().clear()


def tiny_net(n_domains=2, *, seed=0, kind=AdapterKind.FRAMEWISE_2D,
             insertion=None, trainable_base=True, dtype=np.float32,
             bn_gamma_init=0.0):
    bb = build_toy_backbone((3, 4), head_width=6, pool_blocks=(2,),
                            seed=seed, dtype=dtype)
    domains = [DomainSpec(d, f"dom{d}", 2 + d) for d in range(1, n_domains + 1)]
    return build_mdl_network(bb, domains, kind,
                             insertion or InsertionConfig.all(), seed=seed,
                             trainable_base=trainable_base, dtype=dtype,
                             bn_gamma_init=bn_gamma_init)


def batch_for(net, domain_id, b=2, t=3, hw=8, seed=0):
    rng = np.random.default_rng(seed)
    clips = rng.standard_normal((b, t, net.backbone.in_channels, hw, hw))
    k = net.domains[domain_id].num_classes
    return DomainBatch(Tensor(clips.astype(np.float32)),
                       rng.integers(0, k, size=b), domain_id)


def test_x3dm_channel_spec():
    spec = x3dm_channel_spec()
    assert spec.channels == (24, 24, 48, 96, 192)
    assert spec.head_width == 2048
    assert spec.layer_count == 7
    assert spec.channels_at(1) == 24 and spec.channels_at(5) == 192
    assert spec.channel_map() == {1: 24, 2: 24, 3: 48, 4: 96, 5: 192}
    with pytest.raises(ConfigError):
        spec.channels_at(6)
    with pytest.raises(ConfigError):
        spec.channels_at(0)


@pytest.mark.parametrize("cfg,want", [
    (InsertionConfig.all(), {1, 2, 3, 4, 5}),
    (InsertionConfig.early(1), {1}),
    (InsertionConfig.early(3), {1, 2, 3}),
    (InsertionConfig.late(3), {3, 4, 5}),
    (InsertionConfig.late(1), {5}),
    (InsertionConfig.multi_head(), set()),
    (InsertionConfig.early(0), set()),
    (InsertionConfig.late(0), set()),
    (InsertionConfig.early(5), {1, 2, 3, 4, 5}),
])
def test_insertion_resolution_seven_slots(cfg, want):
    assert cfg.locations(7) == frozenset(want)


def test_insertion_parse_and_errors():
    assert InsertionConfig.parse("all") == InsertionConfig.all()
    assert InsertionConfig.parse("early-2") == InsertionConfig.early(2)
    assert InsertionConfig.parse("late-1") == InsertionConfig.late(1)
    assert InsertionConfig.parse("multi-head") == InsertionConfig.multi_head()
    assert InsertionConfig.parse("none") == InsertionConfig.multi_head()
    for bad in ("mid-2", "early-x", "late"):
        with pytest.raises(ConfigError):
            InsertionConfig.parse(bad)
    with pytest.raises(ConfigError):
        InsertionConfig.early(6).locations(7)
    with pytest.raises(ConfigError):
        InsertionConfig("all", 3)
    # parse/str round trip
    for text in ("all", "early-2", "late-3", "multi-head"):
        assert str(InsertionConfig.parse(text)) == text


def test_toy_backbone_geometry():
    bb = build_toy_backbone((4, 4, 8, 8, 8), head_width=16, seed=0)
    assert bb.layer_count == 7
    assert bb.insertion_locations == (1, 2, 3, 4, 5)
    assert bb.channel_map() == {1: 4, 2: 4, 3: 8, 4: 8, 5: 8}
    assert bb.head_width == 16
    spec = bb.channel_spec()
    assert spec.channels == (4, 4, 8, 8, 8)
    x = Tensor(np.zeros((2, 5, 1, 24, 24), dtype=np.float32))
    h = x
    sizes = []
    for blk in bb.blocks:
        h = blk.forward(h, "eval")
        sizes.append(h.shape[3])
    # pooling after blocks 2..5 halves 24 -> 12 -> 6 -> 3 -> 2 (clipped)
    assert sizes == [24, 12, 6, 3, 2, 2]
    assert h.shape == (2, 5, 16, 2, 2)


def test_toy_backbone_validation():
    with pytest.raises(ConfigError):
        build_toy_backbone((), head_width=8)
    with pytest.raises(ConfigError):
        build_toy_backbone((4,), head_width=8, temporal_kernel=2)
    bb = build_toy_backbone((4, 4), head_width=8, temporal_kernel=3, seed=0)
    assert bb.blocks[0].conv.k_t == 3


def test_forward_shapes_and_routing():
    net = tiny_net(2)
    for d in (1, 2):
        logits = mdl_forward(batch_for(net, d), net, "train")
        assert logits.shape == (2, net.domains[d].num_classes)
    stray = batch_for(net, 1)
    with pytest.raises(RoutingError):
        mdl_forward(DomainBatch(stray.clips, stray.labels, 9), net)
    with pytest.raises(RoutingError):
        net.head_for(42)


def test_batch_validation():
    with pytest.raises(ContractError):
        DomainBatch(Tensor(np.zeros((2, 3, 4))), np.zeros(2), 1)
    with pytest.raises(ContractError):
        DomainBatch(Tensor(np.zeros((2, 3, 1, 4, 4))), np.zeros(3), 1)


def test_gradients_stay_inside_routed_domain():
    net = tiny_net(3)
    batch = batch_for(net, 2)
    loss = softmax_cross_entropy(mdl_forward(batch, net, "train"),
                                 batch.labels)
    backward(loss)
    by_name = {name: (tag, t) for tag, name, t in trainable_params(net)}
    for name, (tag, t) in by_name.items():
        if tag in ("base", "ln") or "/d2/" in name:
            assert t.grad is not None, name
        else:
            assert t.grad is None, name


def test_frozen_base_gets_no_grads():
    net = tiny_net(1, trainable_base=False)
    tags = {tag for tag, _, _ in trainable_params(net)}
    assert "base" not in tags
    batch = batch_for(net, 1)
    loss = softmax_cross_entropy(mdl_forward(batch, net, "train"),
                                 batch.labels)
    backward(loss)
    for _, t in net.backbone.param_tensors():
        assert t.grad is None and not t.requires_grad


def test_adapters_at_init_do_not_change_logits():
    net = tiny_net(1, kind=AdapterKind.SEPARABLE_ST, dtype=np.float64)
    net.post_norms.set_passthrough(True)
    batch = batch_for(net, 1)
    with_adapters = mdl_forward(batch, net, "eval").data
    bare = stack_forward(batch.clips, net.backbone, None, None,
                         net.heads[1], "eval").data
    np.testing.assert_array_equal(with_adapters, bare)
    net.post_norms.set_passthrough(False)
    active = mdl_forward(batch, net, "eval").data
    assert not np.array_equal(active, bare)


def test_multi_head_config_has_no_adapters():
    net = tiny_net(2, insertion=InsertionConfig.multi_head())
    assert net.locations == ()
    assert all(not bank.blocks for bank in net.banks.values())
    assert not net.post_norms.norms
    logits = mdl_forward(batch_for(net, 1), net, "train")
    assert logits.shape == (2, 3)
    tags = {tag for tag, _, _ in trainable_params(net)}
    assert tags == {"base", "head"}


def test_domain_params_invariant_to_other_domains():
    two = tiny_net(2, seed=7)
    three = tiny_net(3, seed=7)
    for loc in two.banks[1].blocks:
        np.testing.assert_array_equal(
            two.banks[1].blocks[loc].convs[0].weight.data,
            three.banks[1].blocks[loc].convs[0].weight.data)
    np.testing.assert_array_equal(two.heads[2].weight.data,
                                  three.heads[2].weight.data)


def test_build_determinism():
    a, b = tiny_net(2, seed=3), tiny_net(2, seed=3)
    pa = {n: t.data for _, n, t in trainable_params(a)}
    pb = {n: t.data for _, n, t in trainable_params(b)}
    assert pa.keys() == pb.keys()
    for n in pa:
        np.testing.assert_array_equal(pa[n], pb[n])
    c = tiny_net(2, seed=4)
    pc = {n: t.data for _, n, t in trainable_params(c)}
    assert any(not np.array_equal(pa[n], pc[n]) for n in pa)


def test_dense_domain_ids_required():
    bb = build_toy_backbone((3, 4), head_width=6, seed=0)
    with pytest.raises(ConfigError):
        build_mdl_network(bb, [DomainSpec(1, "a", 2), DomainSpec(3, "b", 2)],
                          AdapterKind.FRAMEWISE_2D, InsertionConfig.all())
    with pytest.raises(ConfigError):
        DomainSpec(0, "zero", 2)
    with pytest.raises(ConfigError):
        DomainSpec(1, "one-class", 1)


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    net = tiny_net(2, seed=5, kind=AdapterKind.SEPARABLE_ST)
    rng = np.random.default_rng(0)
    for _, _, t in trainable_params(net):
        t.data += rng.standard_normal(t.shape).astype(t.dtype) * 0.1
    net.backbone.blocks[0].bn.running_mean += 0.25
    net.banks[1].blocks[1].bn.running_var *= 1.5
    path = tmp_path / "ckpt.npz"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    batch = batch_for(net, 1, seed=2)
    np.testing.assert_array_equal(mdl_forward(batch, net, "eval").data,
                                  mdl_forward(batch, loaded, "eval").data)
    np.testing.assert_array_equal(
        loaded.backbone.blocks[0].bn.running_mean,
        net.backbone.blocks[0].bn.running_mean)
    np.testing.assert_array_equal(
        loaded.banks[1].blocks[1].bn.running_var,
        net.banks[1].blocks[1].bn.running_var)
    assert loaded.adapter_kind is AdapterKind.SEPARABLE_ST
    assert str(loaded.insertion) == str(net.insertion)


def test_checkpoint_rejects_corruption(tmp_path):
    net = tiny_net(1)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(net, path)
    with np.load(path) as zf:
        arrays = {k: zf[k] for k in zf.files}
    bad = dict(arrays)
    del bad["__config__"]
    np.savez(tmp_path / "noheader.npz", **bad)
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "noheader.npz")
    bad = dict(arrays)
    bad["head/d1/weight"] = np.zeros((1, 1), dtype=np.float32)
    np.savez(tmp_path / "badshape.npz", **bad)
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "badshape.npz")
    bad = dict(arrays)
    bad["head/d9/weight"] = np.zeros((2, 6), dtype=np.float32)
    np.savez(tmp_path / "surplus.npz", **bad)
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "surplus.npz")


def test_stack_forward_contract_errors():
    net = tiny_net(1)
    with pytest.raises(DimensionError):
        stack_forward(Tensor(np.zeros((2, 3, 2, 8, 8), dtype=np.float32)),
                      net.backbone, net.banks[1], net.post_norms,
                      net.heads[1])
    with pytest.raises(ConfigError):
        stack_forward(Tensor(np.zeros((1, 2, 1, 8, 8), dtype=np.float32)),
                      net.backbone, net.banks[1], None, net.heads[1])
