"""Adam updates and finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff import Node, Parameter, Tape
from .errors import OptimizerError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(p: Parameter, lr: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update of ``p.value`` in place.

    Consumes and clears ``p.grad``; increments the step count.  A
    non-finite gradient aborts the step.
    """
    if lr <= 0:
        raise OptimizerError(f"learning rate must be positive, got {lr}")
    g = p.grad
    if not np.all(np.isfinite(g)):
        raise OptimizerError(f"non-finite gradient in parameter {p.name or '?'}")
    p.step += 1
    p.adam_m *= beta1
    p.adam_m += (1.0 - beta1) * g
    p.adam_v *= beta2
    p.adam_v += (1.0 - beta2) * g * g
    m_hat = p.adam_m / (1.0 - beta1 ** p.step)
    v_hat = p.adam_v / (1.0 - beta2 ** p.step)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    p.zero_grad()


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def fd_gradient_check(forward: Callable[[], tuple[Tape, Node]],
                      params: Sequence[Parameter],
                      eps: float = 1e-5,
                      tolerance: float = 1e-4) -> list[dict]:
    """Compare analytic gradients against central finite differences.

    ``forward`` must deterministically rebuild the computation and return
    its (tape, scalar output).  Returns one report row per parameter,
    sorted by descending max relative error; each row carries ``name``,
    ``max_rel_err``, ``max_abs_err`` and ``ok``.
    """
    zero_grads(params)
    tape, out = forward()
    tape.backward(out)
    analytic = [p.grad.copy() for p in params]
    zero_grads(params)

    report = []
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(forward()[1].value)
            flat[i] = orig - eps
            f_minus = float(forward()[1].value)
            flat[i] = orig
            num[i] = (f_plus - f_minus) / (2.0 * eps)
        num = num.reshape(p.value.shape)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        rel = np.abs(a - num) / denom
        report.append({
            "name": p.name or "?",
            "max_rel_err": float(rel.max()) if rel.size else 0.0,
            "max_abs_err": float(np.abs(a - num).max()) if rel.size else 0.0,
            "ok": bool(rel.size == 0 or rel.max() < tolerance),
        })
    report.sort(key=lambda r: -r["max_rel_err"])
    return report
