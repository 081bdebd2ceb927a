"""Per-item evaluation metrics and treatment/control pairing."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InsufficientPairsError
from .ingest import Qrels, RankedRun, SampleMetricFile

logger = logging.getLogger(__name__)

METRIC_KINDS = ("ndcg", "accuracy", "identity", "correlation")


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    k: int | None = None

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """Parse ``ndcg@10``, ``accuracy``, ``identity`` or ``correlation``."""
        value = text.strip().lower()
        m = re.fullmatch(r"ndcg@([0-9]+)", value)
        if m:
            k = int(m.group(1))
            if k < 1:
                raise ValueError(f"metric {text!r}: k must be >= 1")
            return cls("ndcg", k)
        if value in ("accuracy", "identity", "correlation"):
            return cls(value)
        raise ValueError(f"unknown metric {text!r}; expected ndcg@k, accuracy, identity or correlation")

    def __str__(self) -> str:
        return f"ndcg@{self.k}" if self.kind == "ndcg" else self.kind


def _check_k(k: int) -> None:
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")


def _dcg(gains) -> float:
    return math.fsum((2.0**g - 1.0) / math.log2(i + 2) for i, g in enumerate(gains))


def ndcg_at_k(run: RankedRun, qrels: Qrels, k: int) -> dict[str, float]:
    """nDCG@k for every query in ``qrels``.

    Gain is ``2**grade - 1``, discount ``log2(rank + 1)``. Queries without
    any positive grade, or missing from the run, score 0.
    """
    _check_k(k)
    scores = {}
    for qid in qrels.query_ids():
        judged = qrels.for_query(qid)
        ideal = _dcg(sorted((g for g in judged.values() if g > 0), reverse=True)[:k])
        if ideal == 0:
            scores[qid] = 0.0
            continue
        top = run.ranking(qid)[:k]
        scores[qid] = _dcg(judged.get(d, 0) for d in top) / ideal
    return scores


def judged_at_k(run: RankedRun, qrels: Qrels, k: int) -> dict[str, float]:
    """Fraction of the top-k documents carrying any judgment (J@k).

    The denominator is ``min(k, list length)``; an empty list gives 0.
    """
    _check_k(k)
    ratios = {}
    for qid in qrels.query_ids():
        judged = qrels.for_query(qid)
        top = run.ranking(qid)[:k]
        ratios[qid] = sum(d in judged for d in top) / len(top) if top else 0.0
    return ratios


def accuracy_per_sample(pred: SampleMetricFile, gold: SampleMetricFile) -> dict[str, float]:
    missing_pred = sorted(set(gold.values) - set(pred.values))
    missing_gold = sorted(set(pred.values) - set(gold.values))
    if missing_pred or missing_gold:
        parts = []
        if missing_pred:
            parts.append(f"missing from predictions: {', '.join(missing_pred)}")
        if missing_gold:
            parts.append(f"missing from gold: {', '.join(missing_gold)}")
        raise AlignmentError("; ".join(parts), missing=tuple(missing_pred + missing_gold))
    return {sid: 1.0 if pred.values[sid] == gold.values[sid] else 0.0 for sid in gold.values}


@dataclass(frozen=True)
class PairedSamples:
    item_ids: tuple[str, ...]
    treatment: np.ndarray
    control: np.ndarray
    dropped_treatment: tuple[str, ...] = ()
    dropped_control: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        t = np.array(self.treatment, dtype=float)
        c = np.array(self.control, dtype=float)
        n = len(self.item_ids)
        if t.shape != (n,) or c.shape != (n,):
            raise ValueError("treatment, control and item_ids must have equal length")
        if n < 2:
            raise InsufficientPairsError(f"need at least 2 paired items, got {n}")
        if not (np.isfinite(t).all() and np.isfinite(c).all()):
            raise ValueError("paired values must be finite")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "control", c)

    @property
    def n(self) -> int:
        return len(self.item_ids)

    @property
    def dropped(self) -> tuple[str, ...]:
        return tuple(sorted(self.dropped_treatment + self.dropped_control))


def pair(treatment: dict[str, float], control: dict[str, float]) -> PairedSamples:
    """Align two per-item maps over their common ids, sorted ascending.

    Ids present on only one side are dropped and reported on the result
    (``dropped_treatment`` / ``dropped_control``) and via a log warning.
    """
    common = sorted(set(treatment) & set(control))
    if len(common) < 2:
        raise InsufficientPairsError(
            f"treatment and control share {len(common)} item id(s); at least 2 are needed"
        )
    only_t = tuple(sorted(set(treatment) - set(control)))
    only_c = tuple(sorted(set(control) - set(treatment)))
    if only_t or only_c:
        logger.warning(
            "pairing dropped %d treatment-only and %d control-only ids", len(only_t), len(only_c)
        )
    return PairedSamples(
        item_ids=tuple(common),
        treatment=np.array([treatment[i] for i in common], dtype=float),
        control=np.array([control[i] for i in common], dtype=float),
        dropped_treatment=only_t,
        dropped_control=only_c,
    )
