"""Config-driven experiments: parse, run, record, aggregate.

A config describes one network/schedule/domain-set combination plus a seed
list; running it produces one run directory per seed containing the resolved
config snapshot, the run record (CSV and JSON), the final checkpoint, the
parameter budget, and a summary. The `report` step aggregates summaries
across seeds and refuses to mix runs whose configs (seeds aside) differ.

Config files come in two equivalent shapes: INI-like sections or one JSON
object keyed by section name. Domains are sections named `domain:<name>`
and get 1-based ids in file order. Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adapters import AdapterKind
from .audit import AuditScenario, audit, walker_count
from .backbone import build_toy_backbone
from .data import (ClipSamplerConfig, DomainSampler, SyntheticDomain,
                   make_eval_hook)
from .errors import ConfigError
from .network import (DomainSpec, InsertionConfig, build_mdl_network,
                      save_checkpoint)
from .trainer import TrainSchedule, train


@dataclass(frozen=True)
class BackboneConfig:
    widths: tuple[int, ...] = (8, 8, 16, 32, 64)
    head_width: int = 128
    in_channels: int = 1
    temporal_kernel: int = 1
    pool_blocks: tuple[int, ...] = (2, 3, 4, 5)


@dataclass(frozen=True)
class DomainConfig:
    name: str
    kind: str
    classes: int
    train_size: int
    val_size: int
    seed: Optional[int] = None     # default: the domain's 1-based id
    noise: float = 0.1
    motion_speed: int = 2
    bank_seed: Optional[int] = None
    brightness: float = 0.0
    contrast: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seeds: tuple[int, ...] = (0,)
    backbone: BackboneConfig = BackboneConfig()
    adapter_kind: Optional[AdapterKind] = AdapterKind.SEPARABLE_ST
    insertion: str = "all"
    trainable_base: bool = True
    bn_gamma_init: float = 0.0
    dtype: str = "float32"
    updates: int = 50
    batch_size: int = 8
    lr0: float = 1e-3
    lr_drop_points: tuple[int, ...] = (8000, 12000)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    eval_every: Optional[int] = None
    eval_max_items: Optional[int] = None
    sampler: ClipSamplerConfig = ClipSamplerConfig()
    domains: tuple[DomainConfig, ...] = ()

    def __post_init__(self):
        if not self.domains:
            raise ConfigError(f"experiment {self.name!r} declares no domains")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32/float64, "
                              f"got {self.dtype!r}")
        InsertionConfig.parse(self.insertion)
        if (self.adapter_kind is None
                and InsertionConfig.parse(self.insertion).mode != "multi-head"):
            raise ConfigError("adapter kind 'none' requires multi-head "
                              "insertion")

    def resolved_insertion(self) -> InsertionConfig:
        return InsertionConfig.parse(self.insertion)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            total_updates=self.updates, batch_size=self.batch_size,
            lr0=self.lr0, lr_drop_points=self.lr_drop_points,
            lr_drop_factor=self.lr_drop_factor, momentum=self.momentum,
            eval_every=self.eval_every)

    def synthetic_domains(self) -> list[SyntheticDomain]:
        out = []
        for i, d in enumerate(self.domains, start=1):
            out.append(SyntheticDomain(
                domain_id=i, name=d.name, kind=d.kind,
                num_classes=d.classes, train_size=d.train_size,
                val_size=d.val_size,
                seed=d.seed if d.seed is not None else i,
                noise=d.noise, motion_speed=d.motion_speed,
                bank_seed=d.bank_seed, brightness=d.brightness,
                contrast=d.contrast))
        return out


def canonical_dict(cfg: ExperimentConfig) -> dict:
    """Plain nested dict of every field, suitable for JSON and hashing."""
    return {
        "name": cfg.name,
        "seeds": list(cfg.seeds),
        "backbone": {
            "widths": list(cfg.backbone.widths),
            "head_width": cfg.backbone.head_width,
            "in_channels": cfg.backbone.in_channels,
            "temporal_kernel": cfg.backbone.temporal_kernel,
            "pool_blocks": list(cfg.backbone.pool_blocks),
        },
        "adapter": {
            "kind": cfg.adapter_kind.value if cfg.adapter_kind else "none",
            "insertion": cfg.insertion,
            "trainable_base": cfg.trainable_base,
            "bn_gamma_init": cfg.bn_gamma_init,
            "dtype": cfg.dtype,
        },
        "schedule": {
            "updates": cfg.updates,
            "batch_size": cfg.batch_size,
            "lr0": cfg.lr0,
            "lr_drop_points": list(cfg.lr_drop_points),
            "lr_drop_factor": cfg.lr_drop_factor,
            "momentum": cfg.momentum,
            "eval_every": cfg.eval_every,
            "eval_max_items": cfg.eval_max_items,
        },
        "sampler": {
            "window_frames": cfg.sampler.window_frames,
            "clip_len": cfg.sampler.clip_len,
            "resize_min": cfg.sampler.resize_min,
            "resize_max": cfg.sampler.resize_max,
            "crop": cfg.sampler.crop,
            "hflip_prob": cfg.sampler.hflip_prob,
            "eval_short_side": cfg.sampler.eval_short_side,
            "n_eval_temporal": cfg.sampler.n_eval_temporal,
        },
        "domains": [
            {"name": d.name, "kind": d.kind, "classes": d.classes,
             "train_size": d.train_size, "val_size": d.val_size,
             "seed": d.seed, "noise": d.noise,
             "motion_speed": d.motion_speed, "bank_seed": d.bank_seed,
             "brightness": d.brightness, "contrast": d.contrast}
            for d in cfg.domains],
    }


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that shapes the result except name and seeds, so
    reruns and renamed copies aggregate while real changes refuse to."""
    doc = canonical_dict(cfg)
    doc.pop("name")
    doc.pop("seeds")
    blob = json.dumps(doc, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- config file parsing ----------------------------------------------------

_SECTION_KEYS = {
    "experiment": {"name", "seeds", "updates", "batch_size", "lr0",
                   "lr_drop_points", "lr_drop_factor", "momentum",
                   "eval_every", "eval_max_items"},
    "backbone": {"widths", "head_width", "in_channels", "temporal_kernel",
                 "pool_blocks"},
    "adapter": {"kind", "insertion", "trainable_base", "bn_gamma_init",
                "dtype"},
    "sampler": {"window_frames", "clip_len", "resize_min", "resize_max",
                "crop", "hflip_prob", "eval_short_side", "n_eval_temporal"},
}
_DOMAIN_KEYS = {"kind", "classes", "train_size", "val_size", "seed", "noise",
                "motion_speed", "bank_seed", "brightness", "contrast"}


def _to_int(section: str, key: str, v) -> int:
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected an integer, "
                          f"got {v!r}") from None


def _to_float(section: str, key: str, v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected a number, "
                          f"got {v!r}") from None


def _to_bool(section: str, key: str, v) -> bool:
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ConfigError(f"[{section}] {key}: expected true/false, got {v!r}")


def _to_int_list(section: str, key: str, v) -> tuple[int, ...]:
    if isinstance(v, (list, tuple)):
        items = v
    else:
        items = [p for p in str(v).replace(",", " ").split() if p]
    return tuple(_to_int(section, key, p) for p in items)


def _check_keys(section: str, given: dict, allowed: set) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")


def _read_sections(path: Path) -> dict[str, dict]:
    """Both file formats normalize to {section: {key: raw value}}."""
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict) or not all(
                isinstance(v, dict) for v in doc.values()):
            raise ConfigError(f"{path}: JSON config must map section names "
                              f"to objects")
        return {k: dict(v) for k, v in doc.items()}
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {name: dict(parser[name]) for name in parser.sections()}


def parse_config_file(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    sections = _read_sections(path)

    domains: list[DomainConfig] = []
    plain: dict[str, dict] = {}
    for sec, kv in sections.items():
        if sec.startswith("domain:"):
            dname = sec.split(":", 1)[1].strip()
            if not dname:
                raise ConfigError(f"[{sec}]: empty domain name")
            _check_keys(sec, kv, _DOMAIN_KEYS)
            if "kind" not in kv or "classes" not in kv:
                raise ConfigError(f"[{sec}]: kind and classes are required")
            domains.append(DomainConfig(
                name=dname, kind=str(kv["kind"]).strip(),
                classes=_to_int(sec, "classes", kv["classes"]),
                train_size=_to_int(sec, "train_size",
                                   kv.get("train_size", 128)),
                val_size=_to_int(sec, "val_size", kv.get("val_size", 32)),
                seed=(None if "seed" not in kv
                      else _to_int(sec, "seed", kv["seed"])),
                noise=_to_float(sec, "noise", kv.get("noise", 0.1)),
                motion_speed=_to_int(sec, "motion_speed",
                                     kv.get("motion_speed", 2)),
                bank_seed=(None if "bank_seed" not in kv
                           else _to_int(sec, "bank_seed", kv["bank_seed"])),
                brightness=_to_float(sec, "brightness",
                                     kv.get("brightness", 0.0)),
                contrast=_to_float(sec, "contrast", kv.get("contrast", 1.0)),
            ))
        elif sec in _SECTION_KEYS:
            _check_keys(sec, kv, _SECTION_KEYS[sec])
            plain[sec] = kv
        else:
            raise ConfigError(f"unknown section [{sec}]; expected "
                              f"{sorted(_SECTION_KEYS)} or domain:<name>")

    exp = plain.get("experiment", {})
    if "name" not in exp:
        raise ConfigError("[experiment] name is required")
    bb = plain.get("backbone", {})
    ad = plain.get("adapter", {})
    sm = plain.get("sampler", {})
    defaults_bb = BackboneConfig()
    defaults_sm = ClipSamplerConfig()

    kind_text = str(ad.get("kind", "2+1d")).strip().lower()
    adapter_kind = None if kind_text == "none" else AdapterKind.parse(kind_text)

    return ExperimentConfig(
        name=str(exp["name"]).strip(),
        seeds=_to_int_list("experiment", "seeds", exp.get("seeds", "0")),
        backbone=BackboneConfig(
            widths=_to_int_list("backbone", "widths",
                                bb.get("widths", defaults_bb.widths)),
            head_width=_to_int(
                "backbone", "head_width",
                bb.get("head_width", defaults_bb.head_width)),
            in_channels=_to_int(
                "backbone", "in_channels",
                bb.get("in_channels", defaults_bb.in_channels)),
            temporal_kernel=_to_int(
                "backbone", "temporal_kernel",
                bb.get("temporal_kernel", defaults_bb.temporal_kernel)),
            pool_blocks=_to_int_list(
                "backbone", "pool_blocks",
                bb.get("pool_blocks", defaults_bb.pool_blocks))),
        adapter_kind=adapter_kind,
        insertion=str(ad.get("insertion", "all")).strip(),
        trainable_base=_to_bool("adapter", "trainable_base",
                                ad.get("trainable_base", True)),
        bn_gamma_init=_to_float("adapter", "bn_gamma_init",
                                ad.get("bn_gamma_init", 0.0)),
        dtype=str(ad.get("dtype", "float32")).strip(),
        updates=_to_int("experiment", "updates", exp.get("updates", 50)),
        batch_size=_to_int("experiment", "batch_size",
                           exp.get("batch_size", 8)),
        lr0=_to_float("experiment", "lr0", exp.get("lr0", 1e-3)),
        lr_drop_points=_to_int_list("experiment", "lr_drop_points",
                                    exp.get("lr_drop_points", (8000, 12000))),
        lr_drop_factor=_to_float("experiment", "lr_drop_factor",
                                 exp.get("lr_drop_factor", 0.1)),
        momentum=_to_float("experiment", "momentum",
                           exp.get("momentum", 0.9)),
        eval_every=(None if "eval_every" not in exp
                    else _to_int("experiment", "eval_every",
                                 exp["eval_every"])),
        eval_max_items=(None if "eval_max_items" not in exp
                        else _to_int("experiment", "eval_max_items",
                                     exp["eval_max_items"])),
        sampler=ClipSamplerConfig(
            window_frames=_to_int(
                "sampler", "window_frames",
                sm.get("window_frames", defaults_sm.window_frames)),
            clip_len=_to_int("sampler", "clip_len",
                             sm.get("clip_len", defaults_sm.clip_len)),
            resize_min=_to_int("sampler", "resize_min",
                               sm.get("resize_min", defaults_sm.resize_min)),
            resize_max=_to_int("sampler", "resize_max",
                               sm.get("resize_max", defaults_sm.resize_max)),
            crop=_to_int("sampler", "crop", sm.get("crop", defaults_sm.crop)),
            hflip_prob=_to_float(
                "sampler", "hflip_prob",
                sm.get("hflip_prob", defaults_sm.hflip_prob)),
            eval_short_side=_to_int(
                "sampler", "eval_short_side",
                sm.get("eval_short_side", defaults_sm.eval_short_side)),
            n_eval_temporal=_to_int(
                "sampler", "n_eval_temporal",
                sm.get("n_eval_temporal", defaults_sm.n_eval_temporal))),
        domains=tuple(domains),
    )


# --- running ----------------------------------------------------------------

def build_network_for(cfg: ExperimentConfig, seed: int):
    """Backbone + network + domains + samplers for one run seed."""
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    backbone = build_toy_backbone(
        cfg.backbone.widths, cfg.backbone.head_width,
        cfg.backbone.in_channels,
        temporal_kernel=cfg.backbone.temporal_kernel,
        pool_blocks=cfg.backbone.pool_blocks, seed=seed, dtype=dtype)
    synth = cfg.synthetic_domains()
    specs = [DomainSpec(d.domain_id, d.name, d.num_classes, dataset=d)
             for d in synth]
    kind = cfg.adapter_kind or AdapterKind.SEPARABLE_ST
    net = build_mdl_network(backbone, specs, kind, cfg.resolved_insertion(),
                            trainable_base=cfg.trainable_base, seed=seed,
                            dtype=dtype, bn_gamma_init=cfg.bn_gamma_init)
    samplers = {d.domain_id: DomainSampler(d, cfg.sampler, cfg.batch_size,
                                           seed=seed, dtype=dtype)
                for d in synth}
    return net, synth, samplers


def budget_report(cfg: ExperimentConfig, net) -> dict:
    """Walker vs closed-form budgets for the run's concrete network."""
    scenario = AuditScenario(
        net.backbone.channel_spec(),
        tuple(d.classes for d in cfg.domains),
        cfg.adapter_kind, cfg.resolved_insertion(),
        trainable_base=cfg.trainable_base,
        base_param_count=net.backbone.param_count())
    closed = audit(scenario)
    walked = walker_count(net)
    as_dict = lambda b: {"base": b.base, "adapters": b.adapters,
                         "heads": b.heads, "shared_norms": b.shared_norms,
                         "total": b.total, "frozen_base": b.frozen_base}
    return {"closed_form": as_dict(closed), "walker": as_dict(walked),
            "match": as_dict(closed) == as_dict(walked)}


def run_experiment(cfg: ExperimentConfig, out_root) -> list[dict]:
    """Train every seed; returns the summary dict of each run."""
    out_root = Path(out_root)
    summaries = []
    for run_idx, seed in enumerate(cfg.seeds):
        run_dir = out_root / cfg.name / f"run{run_idx:02d}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        net, synth, samplers = build_network_for(cfg, seed)
        sched = cfg.schedule()
        hook = make_eval_hook(synth, cfg.sampler,
                              max_items=cfg.eval_max_items)
        record = train(net, sched, samplers, eval_hook=hook)
        wall_s = time.perf_counter() - t0

        snapshot = canonical_dict(cfg)
        snapshot["run"] = {"seed": seed, "index": run_idx,
                           "config_hash": config_hash(cfg)}
        with open(run_dir / "config.json", "w") as fh:
            json.dump(snapshot, fh, indent=1)
        record.write_csv(run_dir / "runrecord.csv")
        record.write_json(run_dir / "runrecord.json")
        save_checkpoint(net, run_dir / "checkpoint.npz")
        with open(run_dir / "budget.json", "w") as fh:
            json.dump(budget_report(cfg, net), fh, indent=1)
        summary = {
            "experiment": cfg.name,
            "seed": seed,
            "run_index": run_idx,
            "config_hash": config_hash(cfg),
            "wall_s": wall_s,
            "domains": {str(d.domain_id): d.name for d in synth},
            "final_top1": {str(k): v
                           for k, v in record.final_metrics().items()},
            "final_loss": {str(r["domain_id"]): r["loss"]
                           for r in record.train_rows()[-len(synth):]},
        }
        with open(run_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=1)
        summaries.append(summary)
    return summaries


# --- aggregation / report ---------------------------------------------------

def aggregate_runs(run_dirs) -> dict:
    """Combine summaries of runs that share a config hash.

    Returns per-domain mean/min/max final top-1 across seeds. Mixing
    different config hashes is refused.
    """
    runs = []
    for d in run_dirs:
        d = Path(d)
        spath = d / "summary.json"
        if not spath.exists():
            raise ConfigError(f"{d} has no summary.json (not a run dir?)")
        with open(spath) as fh:
            runs.append((d, json.load(fh)))
    if not runs:
        raise ConfigError("no run directories given")
    hashes = {s["config_hash"] for _, s in runs}
    if len(hashes) > 1:
        detail = ", ".join(f"{d.name}={s['config_hash']}" for d, s in runs)
        raise ConfigError(f"refusing to aggregate mixed configs: {detail}")
    domains = runs[0][1]["domains"]
    per_domain = {}
    for dom_id, dom_name in domains.items():
        vals = [s["final_top1"].get(dom_id) for _, s in runs]
        vals = [v for v in vals if v is not None]
        if not vals:
            continue
        per_domain[dom_id] = {
            "name": dom_name,
            "mean_top1": float(np.mean(vals)),
            "min_top1": float(np.min(vals)),
            "max_top1": float(np.max(vals)),
            "n_runs": len(vals),
        }
    return {
        "experiment": runs[0][1]["experiment"],
        "config_hash": hashes.pop(),
        "seeds": [s["seed"] for _, s in runs],
        "per_domain": per_domain,
        "run_dirs": [str(d) for d, _ in runs],
    }


def write_report(run_dirs, out_dir) -> dict:
    """Aggregate + CSV + loss/accuracy SVG plots."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    agg = aggregate_runs(run_dirs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "report.json", "w") as fh:
        json.dump(agg, fh, indent=1)
    with open(out_dir / "report.csv", "w") as fh:
        fh.write("domain_id,domain,mean_top1,min_top1,max_top1,n_runs\n")
        for dom_id, row in sorted(agg["per_domain"].items()):
            fh.write(f"{dom_id},{row['name']},{row['mean_top1']:.4f},"
                     f"{row['min_top1']:.4f},{row['max_top1']:.4f},"
                     f"{row['n_runs']}\n")

    from .trainer import RunRecord
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(11, 4))
    for d in agg["run_dirs"]:
        rec = RunRecord.read_json(Path(d) / "runrecord.json")
        by_dom_loss: dict[int, list] = {}
        for r in rec.train_rows():
            by_dom_loss.setdefault(r["domain_id"], []).append(
                (r["update_index"], r["loss"]))
        for dom, pts in sorted(by_dom_loss.items()):
            xs, ys = zip(*pts)
            ax_loss.plot(xs, ys, alpha=0.6,
                         label=f"{Path(d).name} d{dom}")
        by_dom_acc: dict[int, list] = {}
        for r in rec.eval_rows():
            by_dom_acc.setdefault(r["domain_id"], []).append(
                (r["update_index"], r["top1"]))
        for dom, pts in sorted(by_dom_acc.items()):
            xs, ys = zip(*pts)
            ax_acc.plot(xs, ys, marker="o", alpha=0.6,
                        label=f"{Path(d).name} d{dom}")
    ax_loss.set_xlabel("update")
    ax_loss.set_ylabel("loss")
    ax_loss.set_title(f"{agg['experiment']}: training loss")
    ax_acc.set_xlabel("update")
    ax_acc.set_ylabel("top-1")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.set_title("multi-view top-1")
    for ax in (ax_loss, ax_acc):
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_dir / "curves.svg")
    plt.close(fig)
    return agg


# --- desk-scale experiment templates ----------------------------------------

def _motion_domain(train_size=240, val_size=32, noise=0.05) -> DomainConfig:
    return DomainConfig(name="motion", kind="temporal-motion", classes=2,
                        train_size=train_size, val_size=val_size, noise=noise)


def _spatial_domain(train_size=240, val_size=32, noise=0.3) -> DomainConfig:
    return DomainConfig(name="patterns", kind="spatial-patterns", classes=4,
                        train_size=train_size, val_size=val_size, noise=noise)


_DESK = dict(
    backbone=BackboneConfig(widths=(4, 4, 8, 8, 8), head_width=16),
    seeds=(0, 1, 2),
    updates=120,
    batch_size=8,
    lr0=0.02,
    lr_drop_points=(80, 105),
    eval_every=60,
    eval_max_items=24,
)


def template_table1_sweep() -> list[ExperimentConfig]:
    """Adapter-kind sweep on a motion + patterns pair."""
    doms = (_motion_domain(), _spatial_domain())
    return [ExperimentConfig(name=f"table1-sweep-{kind.value.replace('+', 'p')}",
                             adapter_kind=kind, domains=doms, **_DESK)
            for kind in (AdapterKind.FRAMEWISE_2D, AdapterKind.SEPARABLE_ST,
                         AdapterKind.FULL_3D)]


def template_table2_fixvstrain() -> list[ExperimentConfig]:
    """Frozen vs trainable backbone, (2+1)d adapters everywhere."""
    doms = (_motion_domain(), _spatial_domain())
    return [
        ExperimentConfig(name="table2-fix", trainable_base=False,
                         domains=doms, **_DESK),
        ExperimentConfig(name="table2-train", trainable_base=True,
                         domains=doms, **_DESK),
    ]


def template_table3_placement() -> list[ExperimentConfig]:
    """Insertion-config sweep with (2+1)d adapters."""
    doms = (_motion_domain(), _spatial_domain())
    out = []
    for ins in ("all", "early-1", "early-3", "late-3", "late-1",
                "multi-head"):
        kind = None if ins == "multi-head" else AdapterKind.SEPARABLE_ST
        out.append(ExperimentConfig(name=f"table3-{ins}", adapter_kind=kind,
                                    insertion=ins, domains=doms, **_DESK))
    return out


def template_table4_domains() -> list[ExperimentConfig]:
    """1, 2, and 3 domains joint; style pair shares a template bank."""
    small = DomainConfig(name="styled-small", kind="mixed-style", classes=4,
                         train_size=64, val_size=32, noise=0.45,
                         bank_seed=77, brightness=0.15, contrast=0.9)
    large = DomainConfig(name="styled-large", kind="mixed-style", classes=4,
                         train_size=2000, val_size=32, noise=0.2,
                         bank_seed=77)
    return [
        ExperimentConfig(name="table4-d1", domains=(small,), **_DESK),
        ExperimentConfig(name="table4-d2", domains=(small, large), **_DESK),
        ExperimentConfig(name="table4-d3",
                         domains=(small, large, _motion_domain()), **_DESK),
    ]


TEMPLATES = {
    "table1-sweep": template_table1_sweep,
    "table2-fixvstrain": template_table2_fixvstrain,
    "table3-placement": template_table3_placement,
    "table4-domains": template_table4_domains,
}
