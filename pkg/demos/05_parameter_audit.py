"""Parameter budgets from closed forms, checked against golden numbers for
the x3d-m channel layout, then a custom layout audited from scratch.
"""
from mdlvideo.adapters import AdapterKind
from mdlvideo.audit import (AuditScenario, audit, evaluate_golden,
                            render_budget, render_golden_report)
from mdlvideo.backbone import ChannelSpec, x3dm_channel_spec
from mdlvideo.network import InsertionConfig

print(render_golden_report(evaluate_golden()))

# the same machinery on a made-up backbone: five layers, three insertion
# gaps, two domains of different label counts, frozen base of 1.2M
spec = ChannelSpec("pocket-net", (16, 32, 64), head_width=256)
scenario = AuditScenario(spec=spec, domain_classes=(12, 40),
                         adapter_kind=AdapterKind.SEPARABLE_ST,
                         insertion=InsertionConfig.parse("late-2"),
                         trainable_base=False, base_param_count=1_200_000)
print(render_budget(audit(scenario), "pocket-net, late-2, frozen base"))

# budgets react to the insertion choice; count what each config buys
print("separable-st adapters on pocket-net, per insertion config:")
for text in ("all", "early-1", "late-1", "multi-head"):
    s = AuditScenario(spec=spec, domain_classes=(12, 40),
                      adapter_kind=AdapterKind.SEPARABLE_ST,
                      insertion=InsertionConfig.parse(text))
    print(f"  {text:11s} adapters {audit(s).adapters:8d}")
print()
print("x3d-m channel layout:", x3dm_channel_spec().channels,
      "head width", x3dm_channel_spec().head_width)
