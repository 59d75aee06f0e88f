"""Agreement metrics for rating vectors.

Both metrics are computed from first principles on plain sequences, so the
evaluation layer carries no numerics dependency. Undefined cases raise typed
errors instead of leaking NaN into reports.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import EmptyVector, LengthMismatch, ZeroVariance


def _paired(xs: Sequence[float], ys: Sequence[float]):
    if len(xs) != len(ys):
        raise LengthMismatch(f"vector lengths differ: {len(xs)} vs {len(ys)}")
    if not xs:
        raise EmptyVector("metric undefined for empty vectors")


def mae(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Mean absolute error: average of |x_i - y_i|."""
    _paired(xs, ys)
    return sum(abs(x - y) for x, y in zip(xs, ys)) / len(xs)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson product-moment correlation coefficient.

    Raises ZeroVariance when either vector is constant; the coefficient is
    undefined there and callers must handle that case explicitly.
    """
    _paired(xs, ys)
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    scale_x = max(abs(d) for d in dx)
    scale_y = max(abs(d) for d in dy)
    if scale_x == 0.0 or scale_y == 0.0:
        which = "first" if scale_x == 0.0 else "second"
        raise ZeroVariance(f"correlation undefined: the {which} vector is constant")
    # unit-scaled deviations keep the sums of squares away from under/overflow
    ux = [d / scale_x for d in dx]
    uy = [d / scale_y for d in dy]
    ss_x = sum(u * u for u in ux)
    ss_y = sum(u * u for u in uy)
    return sum(a * b for a, b in zip(ux, uy)) / math.sqrt(ss_x * ss_y)
