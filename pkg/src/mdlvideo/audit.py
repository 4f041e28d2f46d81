"""Closed-form parameter accounting, and golden checks against the
reference X3D-M budget tables.

Counting rules (trainable scalars only):

* adapter at width C: kernel volume * C^2 weights + 2C batch-norm scalars
  (9/12/27 C^2 for 2D, (2+1)D, 3D kinds);
* head for N classes over width F: N * (F + 1) including bias;
* shared post-norm at width C: 2C, once per location (not per domain);
* backbone: a supplied constant for reference layouts (weights never
  instantiated), or the walker's sum for a concrete network; counted only
  when the base is trainable.

Batch-norm running statistics are state, not parameters, and never counted.
Two independent paths must agree: `audit` (closed forms over a ChannelSpec)
and `walker_count` (sizes of the tensors a real network actually exposes).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .adapters import AdapterKind, adapter_param_count
from .backbone import ChannelSpec, x3dm_channel_spec
from .errors import ConfigError
from .network import InsertionConfig, MdlNetwork, trainable_params


def head_param_count(num_classes: int, head_width: int) -> int:
    return num_classes * (head_width + 1)


def millions(count: int) -> float:
    """count / 1e6 rounded half-up to 2 decimals (table convention)."""
    return math.floor(count / 1e4 + 0.5) / 100.0


@dataclass(frozen=True)
class AuditScenario:
    """Everything that determines a parameter budget, model-free."""
    spec: ChannelSpec
    domain_classes: tuple[int, ...]
    adapter_kind: Optional[AdapterKind]
    insertion: InsertionConfig
    trainable_base: bool = True
    base_param_count: int = 0

    def locations(self) -> tuple[int, ...]:
        return tuple(sorted(self.insertion.locations(self.spec.layer_count)))


@dataclass
class ParamBudget:
    """Trainable-scalar counts by component; `frozen_base` records backbone
    scalars excluded by a frozen base (display only, not in the total)."""
    base: int = 0
    adapters: int = 0
    heads: int = 0
    shared_norms: int = 0
    frozen_base: int = 0
    adapters_per_domain: dict = field(default_factory=dict)
    heads_per_domain: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.base + self.adapters + self.heads + self.shared_norms

    def component(self, name: str) -> int:
        if name == "total":
            return self.total
        if name not in ("base", "adapters", "heads", "shared_norms"):
            raise ConfigError(f"unknown budget component {name!r}")
        return getattr(self, name)


def audit(s: AuditScenario) -> ParamBudget:
    """Closed-form budget of a scenario."""
    if s.adapter_kind is None and str(s.insertion) != "multi-head":
        raise ConfigError("adapter_kind is required unless insertion is "
                          "multi-head")
    locs = s.locations()
    budget = ParamBudget()
    per_domain_adapters = 0
    if locs:
        per_domain_adapters = sum(
            adapter_param_count(s.adapter_kind, s.spec.channels_at(l))
            for l in locs)
        budget.shared_norms = sum(2 * s.spec.channels_at(l) for l in locs)
    for d, n_classes in enumerate(s.domain_classes, start=1):
        budget.adapters_per_domain[d] = per_domain_adapters
        budget.heads_per_domain[d] = head_param_count(n_classes,
                                                      s.spec.head_width)
    budget.adapters = per_domain_adapters * len(s.domain_classes)
    budget.heads = sum(budget.heads_per_domain.values())
    if s.trainable_base:
        budget.base = s.base_param_count
    else:
        budget.frozen_base = s.base_param_count
    return budget


def walker_count(net: MdlNetwork) -> ParamBudget:
    """Budget measured by walking a concrete network's trainable tensors.

    Independent of the closed forms: it only sums `size` over what
    `trainable_params` yields, so structural bugs (missing bias, double
    counted norm, ...) surface as a mismatch with `audit`.
    """
    budget = ParamBudget()
    for d in net.domain_ids:
        budget.adapters_per_domain[d] = 0
        budget.heads_per_domain[d] = 0
    for tag, name, t in trainable_params(net):
        if tag == "base":
            budget.base += t.size
        elif tag == "adapter":
            budget.adapters += t.size
            d = int(name.split("/")[1][1:])
            budget.adapters_per_domain[d] = \
                budget.adapters_per_domain.get(d, 0) + t.size
        elif tag == "head":
            budget.heads += t.size
            d = int(name.split("/")[1][1:])
            budget.heads_per_domain[d] = \
                budget.heads_per_domain.get(d, 0) + t.size
        elif tag == "ln":
            budget.shared_norms += t.size
        else:
            raise ConfigError(f"unknown parameter tag {tag!r}")
    if not net.trainable_base:
        budget.frozen_base = net.backbone.param_count()
    return budget


# Reference X3D-M table cells re-checked by the audit. `expected_m` is a
# single value (pass within +-0.01 M) or an inclusive (lo, hi) range for the
# rounded value.
@dataclass(frozen=True)
class GoldenRow:
    table: str
    label: str
    component: str
    expected_m: Union[float, tuple[float, float]]
    scenario: AuditScenario


@dataclass
class GoldenResult:
    row: GoldenRow
    count: int
    passed: bool

    @property
    def ours_m(self) -> float:
        return millions(self.count)


X3D_BASE_PARAMS = 2_970_000
_D3 = (51, 101, 400)


def x3d_golden_rows() -> list[GoldenRow]:
    spec = x3dm_channel_spec()

    def scen(kind, insertion, classes=_D3, trainable_base=True):
        return AuditScenario(spec, tuple(classes), kind, insertion,
                             trainable_base=trainable_base,
                             base_param_count=X3D_BASE_PARAMS)

    k2d, ksep, k3d = (AdapterKind.FRAMEWISE_2D, AdapterKind.SEPARABLE_ST,
                      AdapterKind.FULL_3D)
    all_ = InsertionConfig.all()
    rows = [
        GoldenRow("table1", "2d adapters, all locations", "adapters", 1.34,
                  scen(k2d, all_)),
        GoldenRow("table1", "(2+1)d adapters, all locations", "adapters",
                  1.79, scen(ksep, all_)),
        GoldenRow("table1", "3d adapters, all locations", "adapters", 4.02,
                  scen(k3d, all_)),
        GoldenRow("table1", "heads, 3 domains", "heads", 1.13,
                  scen(ksep, all_)),
        GoldenRow("table2", "frozen base, trainable total", "total",
                  (2.91, 2.92), scen(ksep, all_, trainable_base=False)),
        GoldenRow("table3", "early-1", "adapters", 0.02,
                  scen(ksep, InsertionConfig.early(1))),
        GoldenRow("table3", "early-3", "adapters", 0.13,
                  scen(ksep, InsertionConfig.early(3))),
        GoldenRow("table3", "late-3", "adapters", 1.75,
                  scen(ksep, InsertionConfig.late(3))),
        GoldenRow("table3", "late-1", "adapters", 1.33,
                  scen(ksep, InsertionConfig.late(1))),
        GoldenRow("table3", "multi-head", "adapters", 0.0,
                  scen(None, InsertionConfig.multi_head())),
        GoldenRow("table3", "all", "adapters", 1.79, scen(ksep, all_)),
        GoldenRow("table4a", "heads, 51 classes", "heads", 0.10,
                  scen(ksep, all_, classes=(51,))),
        GoldenRow("table4a", "heads, 101 classes", "heads", 0.21,
                  scen(ksep, all_, classes=(101,))),
        GoldenRow("table4a", "heads, 400 classes", "heads", 0.82,
                  scen(ksep, all_, classes=(400,))),
        GoldenRow("table4a", "heads, 51+101", "heads", 0.31,
                  scen(ksep, all_, classes=(51, 101))),
        GoldenRow("table4a", "heads, 51+400", "heads", 0.92,
                  scen(ksep, all_, classes=(51, 400))),
        GoldenRow("table4a", "heads, 101+400", "heads", 1.03,
                  scen(ksep, all_, classes=(101, 400))),
        GoldenRow("table4a", "heads, 3 domains", "heads", 1.13,
                  scen(ksep, all_)),
        GoldenRow("table4a", "adapters, 1 domain", "adapters", 0.60,
                  scen(ksep, all_, classes=(51,))),
        GoldenRow("table4a", "adapters, 2 domains", "adapters", 1.19,
                  scen(ksep, all_, classes=(51, 101))),
        GoldenRow("table4a", "adapters, 3 domains", "adapters", 1.79,
                  scen(ksep, all_)),
    ]
    return rows


GOLDEN_TOLERANCE_M = 0.01


def evaluate_golden(rows: Optional[list[GoldenRow]] = None
                    ) -> list[GoldenResult]:
    if rows is None:
        rows = x3d_golden_rows()
    results = []
    for row in rows:
        count = audit(row.scenario).component(row.component)
        if isinstance(row.expected_m, tuple):
            lo, hi = row.expected_m
            ok = lo <= millions(count) <= hi
        else:
            ok = abs(count / 1e6 - row.expected_m) <= GOLDEN_TOLERANCE_M + 1e-9
        results.append(GoldenResult(row, count, ok))
    return results


def render_budget(budget: ParamBudget, title: str = "budget") -> str:
    lines = [f"parameter budget: {title}"]
    for name in ("base", "adapters", "heads", "shared_norms"):
        lines.append(f"  {name:<14} {budget.component(name):>12,}  "
                     f"({millions(budget.component(name)):.2f} M)")
    lines.append(f"  {'total':<14} {budget.total:>12,}  "
                 f"({millions(budget.total):.2f} M)")
    if budget.frozen_base:
        lines.append(f"  frozen base    {budget.frozen_base:>12,}  "
                     f"(excluded from total)")
    return "\n".join(lines)


def render_golden_report(results: list[GoldenResult]) -> str:
    lines = ["golden parameter checks (X3D-M layout, +-0.01 M)",
             f"{'table':<8} {'row':<28} {'component':<10} "
             f"{'ours':>10} {'golden':>10}  status"]
    for r in results:
        exp = (f"{r.row.expected_m[0]:.2f}-{r.row.expected_m[1]:.2f}"
               if isinstance(r.row.expected_m, tuple)
               else f"{r.row.expected_m:.2f}")
        status = "ok" if r.passed else "FAIL"
        lines.append(f"{r.row.table:<8} {r.row.label:<28} "
                     f"{r.row.component:<10} {r.count / 1e6:>10.4f} "
                     f"{exp:>10}  {status}")
    n_fail = sum(1 for r in results if not r.passed)
    lines.append(f"{len(results) - n_fail}/{len(results)} golden rows pass")
    return "\n".join(lines)


def write_golden_csv(results: list[GoldenResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["table", "row", "component", "count", "ours_m",
                         "golden_m", "passed"])
        for r in results:
            exp = (f"{r.row.expected_m[0]}-{r.row.expected_m[1]}"
                   if isinstance(r.row.expected_m, tuple)
                   else r.row.expected_m)
            writer.writerow([r.row.table, r.row.label, r.row.component,
                             r.count, f"{r.count / 1e6:.4f}", exp,
                             r.passed])


_SPEC_KEYS = {"name", "channels", "head_width", "classes", "adapter",
              "insertion", "trainable_base", "base_params"}


def parse_spec_file(path) -> AuditScenario:
    """Read a backbone/audit description from a small key=value file.

    Required keys: name, channels (comma-separated widths), head_width.
    Optional: classes (default 10), adapter (default 2+1d), insertion
    (default all), trainable_base (default true), base_params (default 0).
    """
    values: dict[str, str] = {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec file {path}: "
                          f"{exc.strerror or exc}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, "
                              f"got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SPEC_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = val.strip()
    missing = {"name", "channels", "head_width"} - set(values)
    if missing:
        raise ConfigError(f"{path}: missing required keys {sorted(missing)}")
    try:
        channels = tuple(int(v) for v in values["channels"].split(","))
        head_width = int(values["head_width"])
        classes = tuple(int(v) for v in
                        values.get("classes", "10").split(","))
        base_params = int(values.get("base_params", "0"))
    except ValueError as exc:
        raise ConfigError(f"{path}: bad numeric value ({exc})") from None
    trainable = values.get("trainable_base", "true").strip().lower()
    if trainable not in ("true", "false"):
        raise ConfigError(f"{path}: trainable_base must be true/false, "
                          f"got {trainable!r}")
    insertion = InsertionConfig.parse(values.get("insertion", "all"))
    kind = (None if str(insertion) == "multi-head"
            else AdapterKind.parse(values.get("adapter", "2+1d")))
    return AuditScenario(ChannelSpec(values["name"], channels, head_width),
                         classes, kind, insertion,
                         trainable_base=(trainable == "true"),
                         base_param_count=base_params)
