"""Richardson / Neville extrapolation of step-dependent estimates to zero step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExtrapolationDiverged


@dataclass(frozen=True)
class Extrapolation:
    value: np.ndarray
    # levels[k]: estimate that uses the first k+1 steps
    levels: list
    relative_change: float


def richardson(steps, values, power: int = 1, rtol: float | None = None,
               scale_floor: float = 1.0) -> Extrapolation:
    """Extrapolate ``values[i] = f(steps[i])`` to ``f(0)``.

    ``f`` is modelled as a polynomial in ``h**power`` (``power=2`` for central
    differences, ``power=1`` for one-sided limits), so this is Neville's
    algorithm evaluated at zero; steps need not be geometric.  ``values`` may be
    arrays, extrapolated elementwise.

    With ``rtol`` set, :class:`ExtrapolationDiverged` is raised when the last two
    levels differ by more than ``rtol`` relative to ``max(|estimate|, scale_floor)``.
    """
    x = np.asarray(steps, dtype=float) ** power
    vals = [np.asarray(v, dtype=float) for v in values]
    n = len(x)
    if n == 0 or n != len(vals):
        raise ValueError("need one value per step")
    if len(set(x.tolist())) != n:
        raise ValueError("steps must be distinct")
    levels = [vals[0]]
    prev = vals
    for k in range(1, n):
        prev = [prev[i + 1] + (prev[i + 1] - prev[i]) / (x[i] / x[i + k] - 1.0)
                for i in range(n - k)]
        levels.append(prev[0])
    best = levels[-1]
    if n > 1:
        denom = np.maximum(np.abs(best), scale_floor)
        change = float(np.max(np.abs(levels[-1] - levels[-2]) / denom))
    else:
        change = 0.0
    if rtol is not None and change > rtol:
        raise ExtrapolationDiverged(
            f"successive extrapolation levels differ by {change:.3e} (relative)",
            estimates=levels)
    return Extrapolation(best, levels, change)
