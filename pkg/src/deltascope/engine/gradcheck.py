"""Finite-difference verification of analytic gradients.

`grad_check` rebuilds the graph under small perturbations of every input
element and compares central differences against the gradients produced by
`backward`. Non-smooth points (e.g. relu evaluated at exactly zero) are
detected by disagreeing one-sided slopes and reported as excluded rather
than failed; the same detector may exclude exact stationary points, which
is conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from deltascope.errors import ConfigError, UsageError
from deltascope.engine.tensor import Tensor

# one-sided slopes that disagree by more than this fraction of their
# combined magnitude mark a non-differentiable point
_KINK_RATIO = 0.1


@dataclass
class GradCheckResult:
    """Outcome of a finite-difference sweep."""

    max_rel_error: float
    n_checked: int
    excluded: list[tuple[int, int]] = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error


def grad_check(build: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-5) -> GradCheckResult:
    """Compare analytic and numeric gradients of `build(*inputs)`.

    `build` must construct a fresh scalar-output graph over the given leaf
    tensors on every call and be deterministic (train-mode dropout needs a
    freshly seeded generator per call). The relative error per element is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|); the result
    carries the maximum over all checked elements and the (input, element)
    indices excluded at detected kinks.
    """
    if eps <= 0.0:
        raise ConfigError(f"grad_check: eps must be positive, got {eps}")
    inputs = list(inputs)
    if not inputs:
        raise UsageError("grad_check: need at least one input tensor")
    for t in inputs:
        if not t.requires_grad:
            raise UsageError("grad_check: every input must have requires_grad set")

    base = build(*inputs)
    if base.data.size != 1:
        raise UsageError(f"grad_check: build must return a scalar, got shape {base.shape}")
    if float(build(*inputs).data) != float(base.data):
        raise UsageError("grad_check: graph is not deterministic across rebuilds")
    f0 = float(base.data)

    for t in inputs:
        t.zero_grad()
    build(*inputs).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    max_err = 0.0
    checked = 0
    excluded: list[tuple[int, int]] = []
    for ti, t in enumerate(inputs):
        flat = t.data.ravel()
        a_flat = analytic[ti].ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = float(build(*inputs).data)
            flat[j] = orig - eps
            f_minus = float(build(*inputs).data)
            flat[j] = orig

            right = (f_plus - f0) / eps
            left = (f0 - f_minus) / eps
            if abs(right - left) > _KINK_RATIO * (abs(right) + abs(left) + 1e-8):
                excluded.append((ti, j))
                continue
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[j] - numeric) / max(1e-8, abs(a_flat[j]) + abs(numeric))
            if err > max_err:
                max_err = err
            checked += 1
    return GradCheckResult(max_err, checked, excluded)
