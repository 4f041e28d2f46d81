"""Multi-domain learning for video recognition.

One shared spatio-temporal backbone serves many classification domains;
each domain owns a bank of small residual adapters (frame-wise 2D,
separable (2+1)D, or full 3D) inserted between backbone layers, plus its
own linear head. Training cycles through the domains round-robin,
accumulating gradients across one batch per domain before every optimizer
step. Everything runs on a small numpy tape-autodiff core whose gradients
are finite-difference checked.
"""

from .adapters import (AdapterBank, AdapterBlock, AdapterKind,
                       SharedPostNorm, adapter_forward, adapter_param_count,
                       build_bank, count_params)
from .audit import (AuditScenario, ParamBudget, audit, evaluate_golden,
                    millions, walker_count, x3d_golden_rows)
from .backbone import (BackboneBlock, ChannelSpec, Head, LayerStack,
                       build_toy_backbone, stack_forward, x3dm_channel_spec)
from .data import (ClipCache, ClipSamplerConfig, DomainSampler,
                   SyntheticDomain, evaluate_domain, generate_clip,
                   multiview_predict, sample_eval_views, sample_train_clip)
from .errors import (ConfigError, ContractError, DimensionError, MdlError,
                     NanLossError, RoutingError)
from .network import (DomainBatch, DomainSpec, InsertionConfig, MdlNetwork,
                      build_mdl_network, load_checkpoint, mdl_forward,
                      save_checkpoint, trainable_params)
from .tensor import (GradCheckReport, Tape, Tensor, active_tape, backward,
                     finite_diff_check, no_grad, record, set_debug_checks)
from .trainer import (RunRecord, SgdMomentum, TrainSchedule,
                      accumulate_and_step, accumulate_cycle, domain_cycle,
                      lr_at, train)

__version__ = "0.1.0"
