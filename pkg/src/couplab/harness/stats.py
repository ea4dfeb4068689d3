"""Small statistical helpers for Monte Carlo metrics."""

from __future__ import annotations

import math

Z95 = 1.959963984540054


def proportion_ci(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Estimate and normal-approximation CI half-width of a Bernoulli rate."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = successes / trials
    return p, z * math.sqrt(p * (1.0 - p) / trials)


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic for ``p1 - p2`` and its two-sided p-value."""
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        return 0.0, 1.0
    z = (p1 - p2) / se
    return z, math.erfc(abs(z) / math.sqrt(2.0))


def intervals_overlap(a: float, ha: float, b: float, hb: float) -> bool:
    return abs(a - b) <= ha + hb
