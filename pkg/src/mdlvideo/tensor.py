"""Dense tensors with tape-based reverse-mode automatic differentiation.

Ops compute eagerly on numpy arrays and append one node per call to the
active tape. `backward` replays the tape in exact reverse execution order,
accumulating gradients with `+=` into each tensor's `grad` buffer, then
consumes the tape. Gradients persist until explicitly zeroed, which is what
lets a training loop run several backward passes (one per domain) before a
single optimizer step.

The tape is module-level and single-threaded by design; nothing here is
safe to share across threads.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True
_debug_checks = False


def set_debug_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf screening of tensor payloads; returns the prior setting.

    With checks on, creating a tensor or recording an op output with a
    non-finite entry raises ContractError. Meant for tests and debugging;
    the trainer separately guards the loss value on every step.
    """
    global _debug_checks
    prev = _debug_checks
    _debug_checks = bool(enabled)
    return prev


def debug_checks_enabled() -> bool:
    return _debug_checks


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Context manager: ops run but record nothing on the tape."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float array plus a gradient buffer.

    `requires_grad` marks leaves (parameters, or inputs under test) whose
    gradients should be kept. Intermediate op outputs get the flag derived
    from their inputs. `grad` is lazily allocated on first accumulation and
    always matches `data` in shape and dtype.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        if _debug_checks and not np.all(np.isfinite(self.data)):
            raise ContractError(f"non-finite values in tensor {name or '<anon>'}")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, delta) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += delta

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Same data, no grad tracking."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        grad = " grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad}{tag})"


@dataclass
class TapeNode:
    """One recorded op: its name, output, and a closure that routes the
    output's gradient into the inputs."""
    op_name: str
    output: Tensor
    backward: Callable[[np.ndarray], None]


class Tape:
    """Execution-order record of ops since the last backward."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def append(self, node: TapeNode) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()


_active_tape = Tape()


def active_tape() -> Tape:
    return _active_tape


def record(op_name: str, output: Tensor, inputs: Sequence[Tensor],
           backward: Callable[[np.ndarray], None]) -> Tensor:
    """Finish an op: mark the output and put a node on the tape.

    Recording happens only when grad mode is on and at least one input
    requires a gradient; otherwise the output is a plain value.
    """
    if _debug_checks and not np.all(np.isfinite(output.data)):
        raise ContractError(f"non-finite values produced by op {op_name}")
    if _grad_enabled and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        _active_tape.append(TapeNode(op_name, output, backward))
    else:
        output.requires_grad = False
    return output


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Reverse sweep from a scalar loss; consumes the tape.

    Seeds d(loss)/d(loss) = 1 and visits nodes in exact reverse execution
    order, so every consumer of a value contributes its gradient before the
    value's producer reads it. Nodes whose output never received a gradient
    (disconnected from the loss) are skipped. The tape is cleared afterwards;
    leaf gradients stay behind for the caller.
    """
    if tape is None:
        tape = _active_tape
    if loss.data.size != 1:
        raise ContractError(
            f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.accumulate_grad(np.ones_like(loss.data))
    try:
        for node in reversed(tape.nodes):
            g = node.output.grad
            if g is None:
                continue
            node.backward(g)
    finally:
        tape.clear()


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference comparison."""
    name: str
    passed: bool
    max_rel_err: float
    rtol: float
    coords_checked: int
    coords_total: int
    worst_index: tuple
    analytic_at_worst: float
    numeric_at_worst: float

    def __str__(self) -> str:
        status = "ok  " if self.passed else "FAIL"
        return (f"[{status}] {self.name}: max rel err {self.max_rel_err:.3e} "
                f"(rtol {self.rtol:.0e}, {self.coords_checked}/{self.coords_total} coords, "
                f"worst at {self.worst_index}: analytic {self.analytic_at_worst:.6g} "
                f"vs numeric {self.numeric_at_worst:.6g})")


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, *,
                      eps: float = 1e-5, rtol: float = 1e-4,
                      max_coords: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None,
                      floor: float = 1e-6,
                      name: str = "") -> GradCheckReport:
    """Compare the taped gradient of ``f`` at ``x`` against central differences.

    ``f`` maps ``x`` to a scalar Tensor and may close over other tensors
    (e.g. check one network parameter while the rest stay fixed). One taped
    forward/backward gives the analytic gradient; then each checked
    coordinate i is perturbed in place to form
    (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), with those evaluations under
    no_grad. The per-coordinate relative error uses denominator
    max(|analytic|, |numeric|, floor).

    When ``max_coords`` is given and x has more coordinates, a random subset
    of that size is checked (``rng`` defaults to a fixed seed). ``x.data``
    is restored exactly; ``x.grad`` is left cleared, and gradients of other
    tensors touched by ``f`` are left in an unspecified accumulated state.

    Double-precision inputs are expected; float32 cannot reach these
    tolerances.
    """
    prior_flag = x.requires_grad
    x.requires_grad = True
    x.zero_grad()
    try:
        y = f(x)
        if y.data.size != 1:
            raise ContractError(
                f"finite_diff_check needs a scalar-valued f, got {y.data.shape}")
        backward(y)
        analytic = (x.grad.copy() if x.grad is not None
                    else np.zeros_like(x.data))
        x.zero_grad()

        flat = x.data.reshape(-1)
        aflat = analytic.reshape(-1)
        total = flat.size
        if max_coords is not None and total > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(total, size=max_coords, replace=False)
        else:
            coords = np.arange(total)

        max_err = 0.0
        worst = (0,)
        worst_a = worst_n = 0.0
        with no_grad():
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = f(x).item()
                flat[i] = orig - eps
                f_minus = f(x).item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(aflat[i])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                if err > max_err:
                    max_err = err
                    worst = np.unravel_index(int(i), x.data.shape)
                    worst_a, worst_n = a, numeric
        return GradCheckReport(
            name=name or getattr(f, "__name__", "f"),
            passed=max_err <= rtol,
            max_rel_err=max_err,
            rtol=rtol,
            coords_checked=len(coords),
            coords_total=total,
            worst_index=tuple(int(v) for v in worst),
            analytic_at_worst=worst_a,
            numeric_at_worst=worst_n,
        )
    finally:
        x.requires_grad = prior_flag
