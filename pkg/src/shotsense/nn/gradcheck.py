"""Numeric audit: analytic gradients vs central finite differences.

Checks run in float64 so the finite-difference noise floor sits far below
the tolerances being asserted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
               tolerance: float = 1e-4, h: float = 1e-4) -> GradCheckReport:
    """Compare fn's analytic gradient to central differences.

    ``fn`` must be a pure function of its tensor inputs (no hidden state
    mutation between calls). Non-scalar outputs are contracted with a fixed
    random projection so a single scalar is differentiated. Relative error
    per component uses denominator max(|analytic|, |numeric|) floored at
    1e-3 of the largest gradient magnitude, so near-zero components are
    judged on an absolute scale.
    """
    tensors = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
    out = fn(*tensors)
    if out.data.size == 1:
        proj = None
        scalar = lambda o: float(o.data.reshape(()))
    else:
        proj = np.random.default_rng(0).normal(size=out.data.shape)
        scalar = lambda o: float(np.sum(o.data * proj))
    out.backward(proj)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    numeric = []
    for i, t in enumerate(tensors):
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = scalar(fn(*tensors))
            flat[j] = orig - h
            f_minus = scalar(fn(*tensors))
            flat[j] = orig
            gflat[j] = (f_plus - f_minus) / (2.0 * h)
        numeric.append(g)

    g_max = max((max(np.abs(a).max(), np.abs(n).max()) if a.size else 0.0)
                for a, n in zip(analytic, numeric))
    floor = max(1e-3 * g_max, 1e-12)
    per_input = []
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        per_input.append(float((np.abs(a - n) / denom).max()) if a.size else 0.0)
    return GradCheckReport(max_rel_error=max(per_input), per_input=per_input,
                           tolerance=tolerance)
