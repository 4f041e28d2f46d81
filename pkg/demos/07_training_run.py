"""Train a two-domain model end to end at desk scale and watch both heads
learn from interleaved batches with one shared update per cycle.

Takes around a minute on a laptop CPU.
"""
import time

import numpy as np

from mdlvideo.adapters import AdapterKind
from mdlvideo.backbone import build_toy_backbone
from mdlvideo.data import (ClipSamplerConfig, DomainSampler, SyntheticDomain,
                           evaluate_domain, make_eval_hook)
from mdlvideo.network import DomainSpec, InsertionConfig, build_mdl_network
from mdlvideo.trainer import TrainSchedule, lr_at, train

motion = SyntheticDomain(1, "motion", "temporal-motion", 2, 240, 24, seed=1,
                         noise=0.05)
patterns = SyntheticDomain(2, "patterns", "spatial-patterns", 4, 240, 24,
                           seed=2, noise=0.3)
domains = [motion, patterns]
cfg = ClipSamplerConfig()

bb = build_toy_backbone((4, 4, 8, 8, 8), head_width=16, seed=0)
net = build_mdl_network(
    bb, [DomainSpec(d.domain_id, d.name, d.num_classes) for d in domains],
    AdapterKind.SEPARABLE_ST, InsertionConfig.all(), seed=0)
samplers = {d.domain_id: DomainSampler(d, cfg, 8, seed=0) for d in domains}
sched = TrainSchedule(total_updates=80, batch_size=8, lr0=0.02,
                      lr_drop_points=(55, 70), eval_every=40)

print("lr schedule:", [(u, round(lr_at(u, sched), 6)) for u in (0, 55, 70)])
t0 = time.time()
record = train(net, sched, samplers,
               eval_hook=make_eval_hook(domains, cfg, max_items=12))
print(f"trained {sched.total_updates} updates in {time.time() - t0:.0f}s")

losses = {}
for row in record.train_rows():
    losses.setdefault(row["domain_id"], []).append(row["loss"])
for dom_id, vals in sorted(losses.items()):
    head = np.mean(vals[:10])
    tail = np.mean(vals[-10:])
    print(f"domain {dom_id} loss: first10 {head:.3f} -> last10 {tail:.3f}")

for dom in domains:
    top1 = evaluate_domain(net, dom, cfg)
    print(f"{dom.name:9s} 30-view val top-1: {top1:.3f}")
