"""Paired effect sizes: raw mean difference, Hedges' g and Fisher's z."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSamplesError, DomainError, InsufficientPairsError
from .metrics import PairedSamples

FAMILIES = ("MD", "SMD", "CORR")

# 1 - r below this is treated as a perfect positive pairing.
_PERFECT_CORRELATION_EPS = 1e-12


@dataclass(frozen=True)
class EffectSize:
    family: str
    value: float
    variance: float
    n: int
    display_value: float

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown effect family {self.family!r}")
        if not math.isfinite(self.value) or not self.variance >= 0:
            raise DomainError(f"invalid effect: value={self.value}, variance={self.variance}")


@dataclass(frozen=True)
class PairedStats:
    n: int
    mean_diff: float
    s_diff: float
    r_pair: float | None  # None when either vector is constant

    @property
    def correlation_defined(self) -> bool:
        return self.r_pair is not None


def paired_stats(p: PairedSamples) -> PairedStats:
    t, c = p.treatment, p.control
    n = len(t)
    if n < 2:
        raise InsufficientPairsError(f"need at least 2 pairs, got {n}")
    diff = t - c
    mean_diff = float(np.mean(diff))
    s_diff = float(np.std(diff, ddof=1))

    r_pair = None
    if not (np.all(t == t[0]) or np.all(c == c[0])):
        tc = t - t.mean()
        cc = c - c.mean()
        denom = math.sqrt(float(np.dot(tc, tc)) * float(np.dot(cc, cc)))
        if denom > 0:
            r_pair = min(1.0, max(-1.0, float(np.dot(tc, cc)) / denom))
    return PairedStats(n=n, mean_diff=mean_diff, s_diff=s_diff, r_pair=r_pair)


def effect_md(stats: PairedStats) -> EffectSize:
    """Raw mean difference ``D`` with variance ``S_diff**2 / n``."""
    if stats.n < 2:
        raise InsufficientPairsError(f"need at least 2 pairs, got {stats.n}")
    return EffectSize("MD", stats.mean_diff, stats.s_diff**2 / stats.n, stats.n, stats.mean_diff)


def hedges_j(df: int) -> float:
    return 1.0 - 3.0 / (4.0 * df - 1.0)


def cohens_d_paired(stats: PairedStats) -> tuple[float, float]:
    """Uncorrected paired ``d`` and its variance.

    ``S_within = S_diff / sqrt(2(1 - r))`` puts the difference back on the
    scale of the individual measurements.
    """
    if stats.n < 2:
        raise InsufficientPairsError(f"need at least 2 pairs, got {stats.n}")
    if stats.s_diff == 0:
        raise DegenerateSamplesError("treatment and control differ by a constant; SMD undefined")
    r = stats.r_pair
    if r is None:
        raise DegenerateSamplesError("a constant treatment or control vector leaves r undefined; SMD undefined")
    one_minus_r = 1.0 - r
    if one_minus_r <= _PERFECT_CORRELATION_EPS:
        raise DegenerateSamplesError("treatment and control are perfectly correlated (r = 1); SMD undefined")
    s_within = stats.s_diff / math.sqrt(2.0 * one_minus_r)
    d = stats.mean_diff / s_within
    n = stats.n
    v_d = (1.0 / n + d * d / (2.0 * n)) * 2.0 * one_minus_r
    return d, v_d


def effect_smd(stats: PairedStats) -> EffectSize:
    """Hedges' g for paired samples (``df = n - 1``)."""
    d, v_d = cohens_d_paired(stats)
    j = hedges_j(stats.n - 1)
    g = j * d
    return EffectSize("SMD", g, j * j * v_d, stats.n, g)


def fisher_z(r: float) -> float:
    if not -1.0 < r < 1.0:
        raise DomainError(f"correlation must lie strictly inside (-1, 1), got {r}")
    return math.atanh(r)


def fisher_backtransform(z: float) -> float:
    """Inverse of :func:`fisher_z`, ``(e^{2z} - 1) / (e^{2z} + 1)``."""
    return math.tanh(z)


def correlation_variance(r: float, n: int) -> float:
    """Variance of a raw correlation, reported only; pooling uses z."""
    return (1.0 - r * r) ** 2 / (n - 1)


def effect_corr(r: float, n: int) -> EffectSize:
    z = fisher_z(r)
    if isinstance(n, bool) or int(n) != n or n <= 3:
        raise InsufficientPairsError(f"Fisher's z needs n >= 4 samples, got {n}")
    n = int(n)
    return EffectSize("CORR", z, 1.0 / (n - 3), n, r)


def compute_effect(family: str, p: PairedSamples) -> EffectSize:
    """Effect of ``family`` from paired per-item values.

    For CORR the effect is the Pearson correlation between the two vectors.
    """
    stats = paired_stats(p)
    if family == "MD":
        return effect_md(stats)
    if family == "SMD":
        return effect_smd(stats)
    if family == "CORR":
        if stats.r_pair is None:
            raise DegenerateSamplesError("a constant vector leaves the correlation undefined")
        return effect_corr(stats.r_pair, stats.n)
    raise ValueError(f"unknown effect family {family!r}")
