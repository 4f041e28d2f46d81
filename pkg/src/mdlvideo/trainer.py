"""Round-robin multi-domain training.

One *update* is a full pass over the domain list: draw a batch from each
domain in a fixed order, run forward/backward per batch so gradients add up
across domains, then apply a single heavy-ball SGD step and clear the
gradients. Backbone gradients therefore see every domain each update, while
each adapter bank and head only ever receives gradients from its own domain.

The learning rate is a step schedule: lr0 scaled by `drop_factor` once per
drop point passed (an update index equal to a drop point already uses the
dropped rate).
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, NanLossError
from .network import DomainBatch, MdlNetwork, mdl_forward, trainable_params
from .ops import softmax_cross_entropy
from .tensor import Tensor, backward


@dataclass
class TrainSchedule:
    """Hyper-parameters of one training run."""
    total_updates: int
    batch_size: int = 8
    lr0: float = 1e-3
    lr_drop_points: tuple[int, ...] = (8000, 12000)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    domain_order: Optional[tuple[int, ...]] = None
    eval_every: Optional[int] = None

    def __post_init__(self):
        if self.total_updates < 1:
            raise ConfigError(f"total_updates must be >= 1, "
                              f"got {self.total_updates}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), "
                              f"got {self.momentum}")
        pts = tuple(self.lr_drop_points)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError(f"lr_drop_points must be strictly increasing, "
                              f"got {pts}")
        self.lr_drop_points = pts
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")


def lr_at(update_index: int, sched: TrainSchedule) -> float:
    """Step schedule: one factor of `lr_drop_factor` per drop point at or
    before `update_index`."""
    drops = sum(1 for p in sched.lr_drop_points if p <= update_index)
    return sched.lr0 * sched.lr_drop_factor ** drops


class SgdMomentum:
    """Heavy-ball SGD: v <- mu v + g; p <- p - lr v.

    No Nesterov correction, no dampening, no weight decay. A parameter with
    no accumulated gradient keeps its velocity decaying by mu. `step` also
    clears all gradients, closing the accumulate-then-update cycle.
    """

    def __init__(self, net: MdlNetwork, momentum: float = 0.9):
        self.momentum = float(momentum)
        self.params: list[tuple[str, str, Tensor]] = list(trainable_params(net))
        names = [name for _, name, _ in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names in network")
        self.velocities = {name: np.zeros_like(t.data)
                           for _, name, t in self.params}

    def step(self, lr: float) -> None:
        for _, name, t in self.params:
            v = self.velocities[name]
            v *= self.momentum
            if t.grad is not None:
                v += t.grad
            t.data -= lr * v
        self.zero_grads()

    def zero_grads(self) -> None:
        for _, _, t in self.params:
            t.zero_grad()


def domain_cycle(sched: TrainSchedule, samplers: dict,
                 domain_ids: Sequence[int]) -> Iterator[DomainBatch]:
    """Yield batches in the schedule's fixed domain order, forever.

    `samplers` maps domain id to an object whose `next_batch()` returns a
    DomainBatch for that domain.
    """
    order = sched.domain_order or tuple(sorted(domain_ids))
    missing = [d for d in order if d not in samplers]
    if missing:
        raise ConfigError(f"no sampler for domains {missing}")
    while True:
        for d in order:
            batch = samplers[d].next_batch()
            if batch.domain_id != d:
                raise ConfigError(f"sampler for domain {d} produced a batch "
                                  f"tagged {batch.domain_id}")
            yield batch


def accumulate_cycle(net: MdlNetwork, batches: Sequence[DomainBatch],
                     update_index: int = 0) -> dict[int, float]:
    """Forward/backward each domain's batch; gradients accumulate, no
    parameter changes. Returns per-domain loss values."""
    losses: dict[int, float] = {}
    for batch in batches:
        logits = mdl_forward(batch, net, mode="train")
        loss = softmax_cross_entropy(logits, batch.labels)
        value = loss.item()
        if not math.isfinite(value):
            raise NanLossError(batch.domain_id, update_index, value)
        backward(loss)
        losses[batch.domain_id] = value
    return losses


def accumulate_and_step(net: MdlNetwork, opt: SgdMomentum,
                        batches: Sequence[DomainBatch], lr: float,
                        update_index: int = 0) -> dict[int, float]:
    """One full update: accumulate over all domains, then a single step."""
    losses = accumulate_cycle(net, batches, update_index)
    opt.step(lr)
    return losses


class RunRecord:
    """Row-per-event training log, serializable to CSV and JSON.

    Train rows carry (update_index, domain_id, loss, lr, wall_ms); eval rows
    carry (update_index, domain_id, top1).
    """

    COLUMNS = ("kind", "update_index", "domain_id", "loss", "lr",
               "wall_ms", "top1")

    def __init__(self, rows: Optional[list[dict]] = None):
        self.rows: list[dict] = rows if rows is not None else []

    def append_train(self, update_index: int, domain_id: int, loss: float,
                     lr: float, wall_ms: float) -> None:
        self.rows.append({"kind": "train", "update_index": update_index,
                          "domain_id": domain_id, "loss": loss, "lr": lr,
                          "wall_ms": wall_ms, "top1": None})

    def append_eval(self, update_index: int, domain_id: int,
                    top1: float) -> None:
        self.rows.append({"kind": "eval", "update_index": update_index,
                          "domain_id": domain_id, "loss": None, "lr": None,
                          "wall_ms": None, "top1": top1})

    def train_rows(self) -> list[dict]:
        return [r for r in self.rows if r["kind"] == "train"]

    def eval_rows(self) -> list[dict]:
        return [r for r in self.rows if r["kind"] == "eval"]

    def final_metrics(self) -> dict[int, float]:
        """Last recorded top-1 per domain."""
        out: dict[int, float] = {}
        for r in self.eval_rows():
            out[r["domain_id"]] = r["top1"]
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: ("" if row[k] is None else row[k])
                                 for k in self.COLUMNS})

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"rows": self.rows}, fh, indent=1)

    @classmethod
    def read_json(cls, path) -> "RunRecord":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(doc["rows"])


def train(net: MdlNetwork, sched: TrainSchedule, samplers: dict, *,
          eval_hook: Optional[Callable[[MdlNetwork], dict[int, float]]] = None,
          ) -> RunRecord:
    """Run the full round-robin schedule and return the run record.

    `eval_hook(net)` is called every `eval_every` updates (and after the
    final one) and must return {domain_id: top1}. Any non-finite loss aborts
    with NanLossError.
    """
    order = sched.domain_order or tuple(sorted(net.domain_ids))
    unknown = [d for d in order if d not in net.domains]
    if unknown:
        raise ConfigError(f"schedule orders unknown domains {unknown}")
    opt = SgdMomentum(net, momentum=sched.momentum)
    cycle = domain_cycle(sched, samplers, net.domain_ids)
    record = RunRecord()
    for u in range(sched.total_updates):
        lr = lr_at(u, sched)
        for _ in range(len(order)):
            t0 = time.perf_counter()
            batch = next(cycle)
            losses = accumulate_cycle(net, [batch], update_index=u)
            wall_ms = (time.perf_counter() - t0) * 1e3
            record.append_train(u, batch.domain_id, losses[batch.domain_id],
                                lr, wall_ms)
        opt.step(lr)
        is_last = u == sched.total_updates - 1
        if eval_hook is not None and (
                is_last or (sched.eval_every is not None
                            and (u + 1) % sched.eval_every == 0)):
            for d, top1 in sorted(eval_hook(net).items()):
                record.append_eval(u, d, top1)
    return record
