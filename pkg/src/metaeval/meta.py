"""DerSimonian-Laird random-effects pooling and normal-theory intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .effects import EffectSize, fisher_backtransform
from .errors import DomainError, FamilyMismatchError, ZeroVarianceError

# Acklam's rational approximation to the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628274631000e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_ppf(p: float) -> float:
    """Inverse CDF of the standard normal.

    Acklam's approximation (relative error ~1e-9) followed by one Halley
    step against the erfc-based CDF, which brings it to machine precision.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"ppf is defined on (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )

    # Work in the tail nearest to x so the residual is not lost to cancellation.
    if x <= 0:
        e = normal_cdf(x) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def z_critical(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return normal_ppf(1.0 - alpha / 2.0)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not self.lower <= self.upper:
            raise DomainError(f"interval bounds out of order: [{self.lower}, {self.upper}]")

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def confidence_interval(value: float, variance: float, alpha: float, *, fisher: bool = False) -> Interval:
    """``value -/+ z_{1-alpha/2} * sqrt(variance)``.

    With ``fisher=True`` the value is a Fisher z and both limits are mapped
    back to the correlation scale.
    """
    if not variance >= 0 or math.isinf(variance):
        raise DomainError(f"variance must be finite and non-negative, got {variance}")
    half = z_critical(alpha) * math.sqrt(variance)
    lower, upper = value - half, value + half
    if fisher:
        lower, upper = fisher_backtransform(lower), fisher_backtransform(upper)
    return Interval(lower, upper)


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    effect: EffectSize
    fixed_weight: float
    adjusted_weight: float
    weight_share: float
    ci: Interval

    @property
    def display_value(self) -> float:
        return self.effect.display_value


@dataclass(frozen=True)
class Summary:
    value: float
    variance: float
    ci: Interval
    display_value: float


@dataclass(frozen=True)
class PooledResult:
    per_task: tuple[TaskResult, ...]
    tau_squared: float
    q: float
    df: int
    c: float
    summary: Summary
    alpha: float
    family: str

    @property
    def k(self) -> int:
        return len(self.per_task)

    @property
    def weight_shares(self) -> list[float]:
        return [t.weight_share for t in self.per_task]


def pool(effects: Sequence[EffectSize], task_ids: Sequence[str], alpha: float = 0.05) -> PooledResult:
    """Pool per-task effects with the DerSimonian-Laird estimate of tau^2.

    Per-task intervals use each task's own variance; the summary interval
    uses ``1 / sum(W*)``. CORR effects are pooled in z and reported in r.
    """
    effects = list(effects)
    task_ids = list(task_ids)
    if not effects:
        raise DomainError("cannot pool an empty list of effects")
    if len(effects) != len(task_ids):
        raise DomainError(f"{len(effects)} effects but {len(task_ids)} task ids")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    families = {e.family for e in effects}
    if len(families) > 1:
        raise FamilyMismatchError(f"cannot pool mixed effect families: {', '.join(sorted(families))}")
    family = effects[0].family
    fisher = family == "CORR"
    k = len(effects)
    ys = [e.value for e in effects]
    vs = [e.variance for e in effects]

    if k == 1:
        v = vs[0]
        w = 1.0 / v if v > 0 else math.inf
        ci = confidence_interval(ys[0], v, alpha, fisher=fisher)
        task = TaskResult(task_ids[0], effects[0], w, w, 1.0, ci)
        summary = Summary(ys[0], v, ci, effects[0].display_value)
        return PooledResult((task,), 0.0, 0.0, 0, 0.0, summary, alpha, family)

    for tid, v in zip(task_ids, vs):
        if v <= 0:
            raise ZeroVarianceError(f"task {tid!r} has zero variance; its weight would be infinite")

    w = [1.0 / v for v in vs]
    sum_w = math.fsum(w)
    fixed_mean = math.fsum(wi * yi for wi, yi in zip(w, ys)) / sum_w
    # Equal to sum(W Y^2) - (sum(W Y))^2 / sum(W) without the cancellation.
    q = math.fsum(wi * (yi - fixed_mean) ** 2 for wi, yi in zip(w, ys))
    df = k - 1
    c = sum_w - math.fsum(wi * wi for wi in w) / sum_w
    tau2 = max(0.0, (q - df) / c) if c > 0 else 0.0

    w_star = [1.0 / (v + tau2) for v in vs]
    sum_ws = math.fsum(w_star)
    m = math.fsum(wi * yi for wi, yi in zip(w_star, ys)) / sum_ws
    # Rounding can nudge a convex combination just outside its hull.
    m = min(max(m, min(ys)), max(ys))
    v_m = 1.0 / sum_ws

    per_task = tuple(
        TaskResult(tid, e, wi, wsi, wsi / sum_ws, confidence_interval(e.value, e.variance, alpha, fisher=fisher))
        for tid, e, wi, wsi in zip(task_ids, effects, w, w_star)
    )
    summary = Summary(
        value=m,
        variance=v_m,
        ci=confidence_interval(m, v_m, alpha, fisher=fisher),
        display_value=fisher_backtransform(m) if fisher else m,
    )
    return PooledResult(per_task, tau2, q, df, c, summary, alpha, family)
