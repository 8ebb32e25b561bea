"""Plain gradient descent and the finite-difference gradient harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ielkit.errors import NumericsError
from ielkit.grids import ParamStore


def sgd_step(params: ParamStore, learning_rate: float) -> ParamStore:
    """value <- value - lr * grad for trainable entries, then zero grads.

    The step is rejected (nothing mutated) if any trainable gradient is
    non-finite.
    """
    for name, p in params.trainable_items():
        if not np.isfinite(p.grad).all():
            raise NumericsError(f"non-finite gradient for {name!r}; step rejected")
    for _, p in params.trainable_items():
        p.value -= learning_rate * p.grad
    params.zero_grads()
    return params


@dataclass
class GradCheckReport:
    """Per-parameter max relative error of analytic vs central-difference."""

    per_param: dict[str, float]
    epsilon: float
    tolerance: float
    loss_value: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(e <= self.tolerance for e in self.per_param.values())

    def format_table(self) -> str:
        width = max((len(n) for n in self.per_param), default=4)
        lines = [f"{'param'.ljust(width)}  max rel err  status"]
        for name, err in self.per_param.items():
            status = "ok" if err <= self.tolerance else "FAIL"
            lines.append(f"{name.ljust(width)}  {err:11.3e}  {status}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} at tol {self.tolerance:g}")
        return "\n".join(lines)


def finite_diff_grad_check(
    loss: Callable[[], float],
    params: ParamStore,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    `loss` must be deterministic, return a scalar, and leave analytic
    gradients in `params` as a side effect (the harness zeroes grads
    before the reference call).  Every trainable scalar is perturbed by
    +/- epsilon; the relative error denominator is
    max(|analytic|, |numeric|, 1e-12).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    params.zero_grads()
    base = float(loss())
    if not np.isfinite(base):
        raise NumericsError(f"loss is non-finite ({base}); gradient check aborted")
    analytic = {name: p.grad.copy() for name, p in params.trainable_items()}

    per_param: dict[str, float] = {}
    for name, p in params.trainable_items():
        flat = p.value.reshape(-1)
        a = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + epsilon
            params.zero_grads()
            lp = float(loss())
            flat[i] = saved - epsilon
            params.zero_grads()
            lm = float(loss())
            flat[i] = saved
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericsError(
                    f"loss non-finite while perturbing {name}[{i}]; gradient check aborted"
                )
            numeric = (lp - lm) / (2.0 * epsilon)
            rel = abs(a[i] - numeric) / max(abs(a[i]), abs(numeric), 1e-12)
            worst = max(worst, rel)
        per_param[name] = worst

    params.zero_grads()
    return GradCheckReport(per_param=per_param, epsilon=epsilon, tolerance=tolerance, loss_value=base)
