"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .tensor import DiffArray, Tape


class SelectionChanged(RuntimeError):
    """A perturbation moved the computation onto a different discrete branch."""


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    analytic: dict[str, np.ndarray] = field(repr=False)
    numeric: dict[str, np.ndarray] = field(repr=False)
    evaluations: int = 0

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.worst <= tol


def _evaluate(f) -> float:
    value = f()
    value = float(value.item() if isinstance(value, DiffArray) else value)
    if not np.isfinite(value):
        raise FloatingPointError("objective not finite")
    return value


def finite_diff_check(
    f: Callable[[], DiffArray],
    params: Mapping[str, DiffArray],
    h: float = 1e-4,
    selection: Callable[[], Any] | None = None,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backward-through-tape gradients against central differences.

    ``f`` is re-evaluated with each coordinate of each parameter moved by
    +/- h (in place, restored afterwards). If ``selection`` is given it must
    return a comparable snapshot of every discrete choice made by ``f``;
    the check raises :class:`SelectionChanged` when a perturbation alters it.

    Error per coordinate is |analytic - numeric| / max(1, |numeric|).
    ``max_coords`` optionally limits each parameter to a random subset.
    """
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        root = f()
        if not np.isfinite(root.data).all():
            raise FloatingPointError("objective not finite")
        tape.backward(root)
    reference = selection() if selection is not None else None

    analytic: dict[str, np.ndarray] = {}
    numeric: dict[str, np.ndarray] = {}
    errors: dict[str, float] = {}
    evals = 0
    rng = rng or np.random.default_rng(0)
    for name, p in params.items():
        grad = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        num = np.full(p.data.shape, np.nan)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = _evaluate(f)
            if selection is not None and selection() != reference:
                flat[c] = orig
                raise SelectionChanged(f"discrete selection changed at +h on {name}[{c}]")
            flat[c] = orig - h
            fm = _evaluate(f)
            if selection is not None and selection() != reference:
                flat[c] = orig
                raise SelectionChanged(f"discrete selection changed at -h on {name}[{c}]")
            flat[c] = orig
            num.reshape(-1)[c] = (fp - fm) / (2 * h)
            evals += 2
        sel = ~np.isnan(num)
        a, n = grad[sel], num[sel]
        rel = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        errors[name] = float(rel.max()) if rel.size else 0.0
        analytic[name] = grad
        numeric[name] = num
    for p in params.values():
        p.grad = None
    return GradCheckReport(errors, analytic, numeric, evals)
