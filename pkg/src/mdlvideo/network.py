"""The multi-domain network: one shared backbone, per-domain adapter banks
and heads, and a forward pass routed by domain id.

Domain isolation is structural: a batch from domain d touches the shared
blocks, d's adapters, the shared post-norms, and d's head, and nothing owned
by any other domain, so gradients cannot leak across domains within a step.
Each domain's parameters are also initialized from streams keyed by its own
id, so adding a domain never perturbs existing ones.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .adapters import AdapterBank, AdapterKind, SharedPostNorm, build_bank
from .backbone import Head, LayerStack, build_toy_backbone, stack_forward
from .errors import ConfigError, ContractError, RoutingError
from .seeding import derive_rng
from .tensor import Tensor


@dataclass
class DomainSpec:
    """One classification domain: an id (dense, 1-based), a name, and its
    label-space size. `dataset` is an optional slot for whatever object
    serves this domain's clips; the network itself never reads it."""
    domain_id: int
    name: str
    num_classes: int
    dataset: object = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(
                f"domain {self.name!r} needs >= 2 classes, got {self.num_classes}")
        if self.domain_id < 1:
            raise ConfigError(
                f"domain ids are 1-based, got {self.domain_id}")


@dataclass(frozen=True)
class InsertionConfig:
    """Which backbone locations get adapters.

    Modes: 'all' (every location 1..L-2), 'early' (the first x), 'late'
    (the last x, anchored at L-2), 'multi-head' (none; domains differ only
    by their heads). x = 0 early/late equals multi-head; x = L-2 equals all.
    """
    mode: str
    x: Optional[int] = None

    _MODES = ("all", "early", "late", "multi-head")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise ConfigError(f"unknown insertion mode {self.mode!r}")
        if self.mode in ("early", "late"):
            if self.x is None or self.x < 0:
                raise ConfigError(f"{self.mode} insertion needs x >= 0")
        elif self.x is not None:
            raise ConfigError(f"{self.mode} insertion takes no x")

    @classmethod
    def all(cls) -> "InsertionConfig":
        return cls("all")

    @classmethod
    def early(cls, x: int) -> "InsertionConfig":
        return cls("early", x)

    @classmethod
    def late(cls, x: int) -> "InsertionConfig":
        return cls("late", x)

    @classmethod
    def multi_head(cls) -> "InsertionConfig":
        return cls("multi-head")

    @classmethod
    def parse(cls, text: str) -> "InsertionConfig":
        key = text.strip().lower()
        if key == "all":
            return cls.all()
        if key in ("multi-head", "multihead", "none"):
            return cls.multi_head()
        for mode in ("early", "late"):
            if key.startswith(mode + "-"):
                try:
                    return cls(mode, int(key[len(mode) + 1:]))
                except ValueError:
                    break
        raise ConfigError(f"cannot parse insertion config {text!r}; expected "
                          f"all, early-N, late-N, or multi-head")

    def locations(self, layer_count: int) -> frozenset[int]:
        """Resolve to concrete locations for a backbone with L slots."""
        last = layer_count - 2
        if last < 1:
            raise ConfigError(f"backbone with L={layer_count} has no "
                              f"insertion locations")
        if self.mode == "multi-head":
            return frozenset()
        if self.mode == "all":
            return frozenset(range(1, last + 1))
        if self.x > last:
            raise ConfigError(f"{self.mode}-{self.x} exceeds the {last} "
                              f"available locations")
        if self.mode == "early":
            return frozenset(range(1, self.x + 1))
        return frozenset(range(last - self.x + 1, last + 1))

    def __str__(self) -> str:
        if self.mode in ("early", "late"):
            return f"{self.mode}-{self.x}"
        return self.mode


@dataclass
class DomainBatch:
    """A batch drawn from a single domain: clips (B, T, C, H, W), integer
    labels (B,), and the owning domain id."""
    clips: Tensor
    labels: np.ndarray
    domain_id: int

    def __post_init__(self):
        if self.clips.ndim != 5:
            raise ContractError(
                f"batch clips must be (B,T,C,H,W), got {self.clips.shape}")
        self.labels = np.asarray(self.labels)
        if self.labels.shape != (self.clips.shape[0],):
            raise ContractError(
                f"labels shape {self.labels.shape} does not match batch "
                f"size {self.clips.shape[0]}")


class MdlNetwork:
    """Shared backbone + per-domain banks and heads + shared post-norms."""

    def __init__(self, backbone: LayerStack, domains: Sequence[DomainSpec],
                 insertion: InsertionConfig, adapter_kind: AdapterKind,
                 banks: dict[int, AdapterBank], heads: dict[int, Head],
                 post_norms: SharedPostNorm, trainable_base: bool,
                 meta: Optional[dict] = None):
        ids = [d.domain_id for d in domains]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ConfigError(f"domain ids must be dense 1..D, got {ids}")
        self.backbone = backbone
        self.domains = {d.domain_id: d for d in domains}
        self.insertion = insertion
        self.adapter_kind = AdapterKind(adapter_kind)
        self.banks = banks
        self.heads = heads
        self.post_norms = post_norms
        self.trainable_base = bool(trainable_base)
        self.meta = dict(meta or {})
        locs = insertion.locations(backbone.layer_count)
        for d in ids:
            if set(banks[d].locations) != set(locs):
                raise ConfigError(
                    f"bank of domain {d} covers {banks[d].locations}, "
                    f"config says {sorted(locs)}")
        if set(post_norms.norms) != set(locs):
            raise ConfigError(
                f"post-norms cover {sorted(post_norms.norms)}, config says "
                f"{sorted(locs)}")

    @property
    def domain_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.domains))

    @property
    def locations(self) -> tuple[int, ...]:
        return tuple(sorted(self.insertion.locations(
            self.backbone.layer_count)))

    def head_for(self, domain_id: int) -> Head:
        if domain_id not in self.heads:
            raise RoutingError(f"unknown domain id {domain_id}; "
                               f"known: {list(self.domain_ids)}")
        return self.heads[domain_id]

    def forward(self, batch: DomainBatch, mode: str = "train") -> Tensor:
        return mdl_forward(batch, self, mode)


def build_mdl_network(backbone: LayerStack, domains: Sequence[DomainSpec],
                      adapter_kind: AdapterKind, insertion: InsertionConfig,
                      *, trainable_base: bool = True, seed: int = 0,
                      dtype=np.float32,
                      bn_gamma_init: float = 0.0) -> MdlNetwork:
    """Assemble the full multi-domain network around a backbone.

    With `trainable_base` off, every backbone tensor is frozen
    (requires_grad False) and only adapters, heads, and shared post-norms
    learn. Adapter batch norms start at gamma = `bn_gamma_init`; the default
    0 makes every fresh adapter an exact no-op on the backbone's features.
    """
    adapter_kind = AdapterKind(adapter_kind)
    locs = sorted(insertion.locations(backbone.layer_count))
    channel_map = backbone.channel_map()
    banks = {}
    heads = {}
    for dom in domains:
        banks[dom.domain_id] = build_bank(
            dom.domain_id, channel_map, adapter_kind, locs, seed=seed,
            dtype=dtype, bn_gamma_init=bn_gamma_init)
        heads[dom.domain_id] = Head.create(
            dom.num_classes, backbone.head_width,
            rng=derive_rng(seed, "head", dom.domain_id), dtype=dtype)
    post_norms = SharedPostNorm.create(channel_map, locs, dtype=dtype)
    backbone.set_requires_grad(trainable_base)
    return MdlNetwork(backbone, domains, insertion, adapter_kind, banks,
                      heads, post_norms, trainable_base)


def mdl_forward(batch: DomainBatch, net: MdlNetwork,
                mode: str = "train") -> Tensor:
    """Route one batch through the backbone with its domain's adapters and
    head; exactly one bank and one head participate."""
    d = batch.domain_id
    if d not in net.domains:
        raise RoutingError(f"unknown domain id {d}; known: "
                           f"{list(net.domain_ids)}")
    return stack_forward(batch.clips, net.backbone, net.banks[d],
                         net.post_norms, net.heads[d], mode)


def trainable_params(net: MdlNetwork) -> Iterator[tuple[str, str, Tensor]]:
    """Yield (tag, name, tensor) for every trainable tensor.

    Tags: 'base' (backbone, only when the base is trainable), 'adapter',
    'head', 'ln' (shared post-norms, always trainable). Names double as the
    checkpoint keys and are unique across the network.
    """
    if net.trainable_base:
        for name, t in net.backbone.param_tensors():
            yield "base", f"base/{name}", t
    for d in net.domain_ids:
        for name, t in net.banks[d].param_tensors():
            yield "adapter", f"adapter/d{d}/{name}", t
    for d in net.domain_ids:
        for name, t in net.heads[d].param_tensors():
            yield "head", f"head/d{d}/{name}", t
    for name, t in net.post_norms.param_tensors():
        yield "ln", f"ln/{name}", t


def _state_arrays(net: MdlNetwork) -> dict[str, np.ndarray]:
    """Every tensor needed to restore the network, trainable or not,
    including batch-norm running statistics."""
    out: dict[str, np.ndarray] = {}
    for name, t in net.backbone.param_tensors():
        out[f"base/{name}"] = t.data
    for i, blk in enumerate(net.backbone.blocks, start=1):
        out[f"base/layer{i}/bn_running_mean"] = blk.bn.running_mean
        out[f"base/layer{i}/bn_running_var"] = blk.bn.running_var
    for d in net.domain_ids:
        for name, t in net.banks[d].param_tensors():
            out[f"adapter/d{d}/{name}"] = t.data
        for loc, ablk in net.banks[d].blocks.items():
            out[f"adapter/d{d}/loc{loc}/bn_running_mean"] = ablk.bn.running_mean
            out[f"adapter/d{d}/loc{loc}/bn_running_var"] = ablk.bn.running_var
        for name, t in net.heads[d].param_tensors():
            out[f"head/d{d}/{name}"] = t.data
    for name, t in net.post_norms.param_tensors():
        out[f"ln/{name}"] = t.data
    return out


def network_config(net: MdlNetwork) -> dict:
    """The JSON-serializable description a checkpoint stores alongside the
    tensors; enough to rebuild the same architecture."""
    bb = net.backbone
    return {
        "domains": [
            {"domain_id": d.domain_id, "name": d.name,
             "num_classes": d.num_classes}
            for d in (net.domains[i] for i in net.domain_ids)],
        "insertion": str(net.insertion),
        "adapter_kind": net.adapter_kind.value,
        "trainable_base": net.trainable_base,
        "backbone": {
            "widths": [bb.channels_at(l) for l in bb.insertion_locations],
            "head_width": bb.head_width,
            "in_channels": bb.in_channels,
            "temporal_kernel": bb.blocks[0].conv.k_t,
            "pool_blocks": [i for i, blk in enumerate(bb.blocks, start=1)
                            if blk.pool],
        },
        "dtype": np.dtype(net.heads[net.domain_ids[0]].weight.dtype).name,
    }


def save_checkpoint(net: MdlNetwork, path) -> None:
    """Write all tensors plus a config header to a single npz file.

    Keys follow {base|adapter|head|ln}/{domain?}/{location?}/{tensor}; the
    header lives under `__config__` as a JSON string.
    """
    arrays = dict(_state_arrays(net))
    arrays["__config__"] = np.asarray(json.dumps(network_config(net)))
    np.savez(path, **arrays)


def load_checkpoint(path) -> MdlNetwork:
    """Rebuild a network from `save_checkpoint` output; forward outputs are
    bit-identical to the saved network's."""
    with np.load(path, allow_pickle=False) as zf:
        if "__config__" not in zf:
            raise ConfigError(f"{path}: not a network checkpoint "
                              f"(missing __config__)")
        cfg = json.loads(str(zf["__config__"]))
        arrays = {k: zf[k] for k in zf.files if k != "__config__"}
    bb_cfg = cfg["backbone"]
    dtype = np.dtype(cfg["dtype"])
    backbone = build_toy_backbone(
        tuple(bb_cfg["widths"]), bb_cfg["head_width"], bb_cfg["in_channels"],
        temporal_kernel=bb_cfg["temporal_kernel"],
        pool_blocks=tuple(bb_cfg["pool_blocks"]), dtype=dtype)
    domains = [DomainSpec(d["domain_id"], d["name"], d["num_classes"])
               for d in cfg["domains"]]
    net = build_mdl_network(backbone, domains,
                            AdapterKind(cfg["adapter_kind"]),
                            InsertionConfig.parse(cfg["insertion"]),
                            trainable_base=cfg["trainable_base"], dtype=dtype)
    expected = _state_arrays(net)
    missing = set(expected) - set(arrays)
    surplus = set(arrays) - set(expected)
    if missing or surplus:
        raise ConfigError(f"{path}: tensor names do not match the config "
                          f"header (missing {sorted(missing)[:3]}, "
                          f"surplus {sorted(surplus)[:3]})")
    for key, target in expected.items():
        src = arrays[key]
        if src.shape != target.shape:
            raise ConfigError(f"{path}: {key} has shape {src.shape}, "
                              f"expected {target.shape}")
        target[...] = src
    return net
