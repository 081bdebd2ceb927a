"""Effect-size meta-analysis for multi-task NLP and IR evaluation.

Per-task paired effects (mean difference, Hedges' g, Fisher z) are pooled
with a DerSimonian-Laird random-effects model and rendered as forest plots.
"""

__version__ = "0.1.0"

from .effects import (
    EffectSize,
    PairedStats,
    compute_effect,
    effect_corr,
    effect_md,
    effect_smd,
    fisher_backtransform,
    paired_stats,
)
from .errors import MetaEvalError
from .ingest import Manifest, Qrels, RankedRun, SampleMetricFile, load_manifest, parse_qrels, parse_run, parse_sample_metrics
from .meta import Interval, PooledResult, confidence_interval, normal_ppf, pool
from .metrics import PairedSamples, accuracy_per_sample, judged_at_k, ndcg_at_k, pair
from .report import build_forest_spec, render_forest_svg, render_table

__all__ = [
    "EffectSize",
    "Interval",
    "Manifest",
    "MetaEvalError",
    "PairedSamples",
    "PairedStats",
    "PooledResult",
    "Qrels",
    "RankedRun",
    "SampleMetricFile",
    "accuracy_per_sample",
    "build_forest_spec",
    "compute_effect",
    "confidence_interval",
    "effect_corr",
    "effect_md",
    "effect_smd",
    "fisher_backtransform",
    "judged_at_k",
    "load_manifest",
    "ndcg_at_k",
    "normal_ppf",
    "pair",
    "paired_stats",
    "parse_qrels",
    "parse_run",
    "parse_sample_metrics",
    "pool",
    "render_forest_svg",
    "render_table",
]
