"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from errors import GradCheckError

from .tensor import Tensor, no_grad, record_branches


@dataclass
class GradCheckResult:
    errors: list[float] = field(default_factory=list)
    checked: int = 0
    skipped: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)


def _evaluate(function: Callable[[], Tensor]) -> tuple[float, list]:
    with no_grad(), record_branches() as branches:
        out = function()
    if out.size != 1:
        raise GradCheckError(f"function under check must be scalar-valued, got shape {out.shape}")
    return float(out.data.reshape(-1)[0]), list(branches)


def check_gradients(
    function: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_checks_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    atol: float = 0.0,
) -> GradCheckResult:
    """Compare backward() against central differences, coordinate by coordinate.

    ``function`` takes no arguments and reads the current ``params`` values,
    which must be float64. A coordinate whose +h or -h evaluation flips a
    relu/clip/abs branch is not differentiable at that step size and is
    skipped. Differences below ``atol`` count as exact.
    """
    for param in params:
        if param.dtype != np.float64:
            raise GradCheckError(f"grad_check needs float64 parameters, got {param.dtype}")
        param.data = np.ascontiguousarray(param.data)

    first, base_branches = _evaluate(function)
    second, _ = _evaluate(function)
    if first != second:
        raise GradCheckError(f"function is not deterministic: {first!r} != {second!r}")

    for param in params:
        param.grad = None
    loss = function()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    rng = rng or np.random.default_rng(0)
    result = GradCheckResult()
    for param, grad in zip(params, analytic):
        flat = param.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_checks_per_param is not None and flat.size > max_checks_per_param:
            indices = np.sort(rng.choice(flat.size, size=max_checks_per_param, replace=False))
        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus, plus_branches = _evaluate(function)
            flat[index] = original - h
            minus, minus_branches = _evaluate(function)
            flat[index] = original
            if plus_branches != base_branches or minus_branches != base_branches:
                result.skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * h)
            a = float(grad.reshape(-1)[index])
            result.checked += 1
            if abs(a - numeric) <= atol:
                continue
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
        result.errors.append(worst)
    return result


def grad_check_per_param(
    function: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_checks_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> list[float]:
    """Max relative error for each parameter."""
    return check_gradients(function, params, h, max_checks_per_param, rng).errors


def grad_check(
    function: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_checks_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max over parameters of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)."""
    return check_gradients(function, params, h, max_checks_per_param, rng).max_error
