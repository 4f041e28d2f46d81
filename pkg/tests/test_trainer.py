"""Round-robin accumulation, the momentum update, LR schedule, and run logs."""
import copy
import hashlib

import numpy as np
import pytest

from mdlvideo.adapters import AdapterKind
from mdlvideo.backbone import build_toy_backbone
from mdlvideo.errors import ConfigError, NanLossError
from mdlvideo.network import (DomainBatch, DomainSpec, InsertionConfig,
                              build_mdl_network, mdl_forward,
                              trainable_params)
from mdlvideo.ops import softmax_cross_entropy
from mdlvideo.tensor import Tensor, active_tape, backward
from mdlvideo.trainer import (RunRecord, SgdMomentum, TrainSchedule,
                              accumulate_and_step, accumulate_cycle,
                              domain_cycle, lr_at, train)


@pytest.fixture(autouse=True)
def fresh_tape():
    active_tape().clear()
    yield
    active_tape().clear()


def small_net(n_domains=2, *, seed=0, dtype=np.float32, trainable_base=True):
    bb = build_toy_backbone((3, 4), head_width=6, pool_blocks=(2,),
                            seed=seed, dtype=dtype)
    domains = [DomainSpec(d, f"dom{d}", 3) for d in range(1, n_domains + 1)]
    return build_mdl_network(bb, domains, AdapterKind.FRAMEWISE_2D,
                             InsertionConfig.all(), seed=seed, dtype=dtype,
                             trainable_base=trainable_base)


def fixed_batch(net, domain_id, seed):
    rng = np.random.default_rng(seed)
    clips = rng.standard_normal((2, 3, 1, 8, 8))
    dtype = net.heads[domain_id].weight.dtype
    return DomainBatch(Tensor(clips.astype(dtype)),
                       rng.integers(0, 3, size=2), domain_id)


class CannedSampler:
    """Replays a fixed batch list, cycling."""

    def __init__(self, batches):
        self.batches = list(batches)
        self.i = 0

    def next_batch(self):
        b = self.batches[self.i % len(self.batches)]
        self.i += 1
        return b


def param_digest(net):
    h = hashlib.sha256()
    for _, name, t in trainable_params(net):
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()


def test_default_lr_schedule_values():
    sched = TrainSchedule(total_updates=20000)
    assert lr_at(0, sched) == pytest.approx(1e-3)
    assert lr_at(7999, sched) == pytest.approx(1e-3)
    assert lr_at(8000, sched) == pytest.approx(1e-4)
    assert lr_at(11999, sched) == pytest.approx(1e-4)
    assert lr_at(12000, sched) == pytest.approx(1e-5)
    assert lr_at(19999, sched) == pytest.approx(1e-5)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        TrainSchedule(total_updates=0)
    with pytest.raises(ConfigError):
        TrainSchedule(total_updates=1, lr0=0.0)
    with pytest.raises(ConfigError):
        TrainSchedule(total_updates=1, momentum=1.0)
    with pytest.raises(ConfigError):
        TrainSchedule(total_updates=1, lr_drop_points=(10, 10))
    with pytest.raises(ConfigError):
        TrainSchedule(total_updates=1, eval_every=0)


def test_accumulation_equals_sum_of_isolated_gradients():
    # run each domain on its own clone, sum the gradients by name, and
    # compare against one accumulate_cycle over both batches
    net = small_net(2, dtype=np.float64)
    batches = [fixed_batch(net, 1, seed=10), fixed_batch(net, 2, seed=20)]

    summed: dict[str, np.ndarray] = {}
    for batch in batches:
        clone = copy.deepcopy(net)
        loss = softmax_cross_entropy(
            mdl_forward(batch, clone, "train"), batch.labels)
        backward(loss)
        for _, name, t in trainable_params(clone):
            if t.grad is not None:
                summed[name] = summed.get(name, 0.0) + t.grad

    net2 = copy.deepcopy(net)
    accumulate_cycle(net2, batches)
    got = {name: t.grad for _, name, t in trainable_params(net2)
           if t.grad is not None}
    assert got.keys() == summed.keys()
    for name in got:
        np.testing.assert_allclose(got[name], summed[name], rtol=1e-12,
                                   atol=0.0)


def test_params_frozen_within_cycle_and_move_on_step():
    net = small_net(2)
    opt = SgdMomentum(net)
    batches = [fixed_batch(net, 1, seed=1), fixed_batch(net, 2, seed=2)]
    before = param_digest(net)
    accumulate_cycle(net, batches)
    assert param_digest(net) == before  # gradients only, no movement
    opt.step(0.05)
    after_step = param_digest(net)
    assert after_step != before
    assert all(t.grad is None for _, _, t in trainable_params(net))
    losses = accumulate_and_step(net, opt, batches, lr=0.05)
    assert set(losses) == {1, 2}
    assert param_digest(net) != after_step


def test_momentum_velocity_matches_reference_recursion():
    # drive one scalar parameter with hand-picked gradients and check
    # p and v against the heavy-ball recursion computed literally
    net = small_net(1, dtype=np.float64)
    opt = SgdMomentum(net, momentum=0.9)
    _, name, tensor = next(
        (tag, n, t) for tag, n, t in trainable_params(net)
        if n.endswith("bn_gamma"))
    p_ref = tensor.data.copy()
    v_ref = np.zeros_like(p_ref)
    rng = np.random.default_rng(0)
    for _ in range(4):
        g = rng.standard_normal(p_ref.shape)
        tensor.accumulate_grad(g)
        opt.step(0.1)
        v_ref = 0.9 * v_ref + g
        p_ref = p_ref - 0.1 * v_ref
        np.testing.assert_allclose(tensor.data, p_ref, rtol=1e-12)
        np.testing.assert_allclose(opt.velocities[name], v_ref, rtol=1e-12)
    # with no new gradient the velocity decays but still moves the weight
    before = tensor.data.copy()
    opt.step(0.1)
    v_ref *= 0.9
    np.testing.assert_allclose(tensor.data, before - 0.1 * v_ref, rtol=1e-12)


def test_domain_cycle_order_and_errors():
    net = small_net(3)
    sams = {d: CannedSampler([fixed_batch(net, d, seed=d)]) for d in (1, 2, 3)}
    sched = TrainSchedule(total_updates=1)
    cyc = domain_cycle(sched, sams, net.domain_ids)
    seen = [next(cyc).domain_id for _ in range(7)]
    assert seen == [1, 2, 3, 1, 2, 3, 1]
    sched2 = TrainSchedule(total_updates=1, domain_order=(2, 1, 3))
    cyc2 = domain_cycle(sched2, sams, net.domain_ids)
    assert [next(cyc2).domain_id for _ in range(4)] == [2, 1, 3, 2]
    with pytest.raises(ConfigError):
        next(domain_cycle(sched, {1: sams[1]}, net.domain_ids))
    lying = {d: CannedSampler([fixed_batch(net, 1, seed=9)]) for d in (1, 2, 3)}
    cyc3 = domain_cycle(sched, lying, net.domain_ids)
    next(cyc3)
    with pytest.raises(ConfigError):
        next(cyc3)  # domain 2's sampler returns a batch tagged 1


def test_nan_loss_aborts_with_context():
    net = small_net(1)
    batch = fixed_batch(net, 1, seed=3)
    batch.clips.data[...] = np.nan
    with pytest.raises(NanLossError) as exc:
        accumulate_cycle(net, [batch], update_index=17)
    assert exc.value.domain_id == 1
    assert exc.value.update_index == 17


def test_frozen_base_stays_bit_identical_under_training():
    net = small_net(2, trainable_base=False, seed=6)
    base_before = {name: t.data.copy()
                   for name, t in net.backbone.param_tensors()}
    adapter_before = param_digest(net)  # adapters+heads+ln only (no base tag)
    sams = {d: CannedSampler([fixed_batch(net, d, seed=30 + d)])
            for d in (1, 2)}
    train(net, TrainSchedule(total_updates=3, lr0=0.05), sams)
    for name, t in net.backbone.param_tensors():
        np.testing.assert_array_equal(t.data, base_before[name])
    assert param_digest(net) != adapter_before


def test_trainable_base_moves_under_training():
    net = small_net(1, trainable_base=True, seed=6)
    base_before = {name: t.data.copy()
                   for name, t in net.backbone.param_tensors()}
    sams = {1: CannedSampler([fixed_batch(net, 1, seed=31)])}
    train(net, TrainSchedule(total_updates=3, lr0=0.05), sams)
    assert any(not np.array_equal(t.data, base_before[name])
               for name, t in net.backbone.param_tensors())


def test_train_record_layout_and_eval_cadence():
    net = small_net(2)
    sams = {d: CannedSampler([fixed_batch(net, d, seed=40 + d)])
            for d in (1, 2)}
    calls = []

    def hook(n):
        calls.append(1)
        return {1: 0.5, 2: 0.25}

    sched = TrainSchedule(total_updates=5, lr0=0.01, eval_every=2)
    rec = train(net, sched, sams, eval_hook=hook)
    tr = rec.train_rows()
    assert len(tr) == 5 * 2
    assert [r["domain_id"] for r in tr[:4]] == [1, 2, 1, 2]
    assert all(r["lr"] == pytest.approx(0.01) for r in tr)
    assert all(np.isfinite(r["loss"]) and r["wall_ms"] >= 0 for r in tr)
    # evals after updates 2 and 4 (1-based cadence) plus the final update
    assert [r["update_index"] for r in rec.eval_rows()] == [1, 1, 3, 3, 4, 4]
    assert len(calls) == 3
    assert rec.final_metrics() == {1: 0.5, 2: 0.25}


def test_run_record_roundtrip(tmp_path):
    rec = RunRecord()
    rec.append_train(0, 1, 1.25, 0.01, 3.5)
    rec.append_eval(0, 1, 0.75)
    jpath = tmp_path / "rec.json"
    rec.write_json(jpath)
    back = RunRecord.read_json(jpath)
    assert back.rows == rec.rows
    cpath = tmp_path / "rec.csv"
    rec.write_csv(cpath)
    text = cpath.read_text().splitlines()
    assert text[0] == ",".join(RunRecord.COLUMNS)
    assert len(text) == 3
