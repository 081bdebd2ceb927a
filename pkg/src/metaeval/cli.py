"""End-to-end pipeline and command-line entry point.

    metaeval analyze --config manifest.json --out-svg forest.svg --out-md report.md

Exit codes: 0 success, 1 usage or manifest error, 2 ingest/parse error,
3 statistical degeneracy (the message names the task).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .effects import EffectSize, compute_effect, effect_corr
from .errors import (
    AlignmentError,
    ManifestError,
    MetaEvalError,
    ParseError,
    RenderError,
    StatisticsError,
)
from .ingest import (
    EFFECT_TYPES,
    Experiment,
    Manifest,
    load_manifest,
    parse_correlation_record,
    parse_qrels,
    parse_run,
    parse_sample_metrics,
)
from .meta import PooledResult, pool
from .metrics import MetricSpec, accuracy_per_sample, judged_at_k, ndcg_at_k, pair
from .report import build_forest_spec, render_forest_svg, render_table

logger = logging.getLogger("metaeval")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_STATS = 0, 1, 2, 3

AXIS_LABELS = {
    "MD": "Mean Difference",
    "SMD": "Standardized Mean Difference (Hedges' g)",
    "CORR": "Correlation (r)",
}


@dataclass
class TaskDiagnostics:
    task_id: str
    display_name: str
    n_pairs: int
    dropped_ids: list[str] = field(default_factory=list)
    mean_treatment: float | None = None
    mean_control: float | None = None
    judged_treatment: float | None = None
    judged_control: float | None = None


@dataclass
class RunReport:
    manifest: Manifest
    diagnostics: list[TaskDiagnostics]
    result: PooledResult
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        m = self.manifest
        return {
            "manifest": {
                "metric": m.metric,
                "effect_type": m.effect_type,
                "alpha": m.alpha,
                "tasks": [e.task_id for e in m.experiments],
            },
            "diagnostics": [asdict(d) for d in self.diagnostics],
            "pooled": {
                "tau_squared": self.result.tau_squared,
                "q": self.result.q,
                "df": self.result.df,
                "summary": {
                    "value": self.result.summary.value,
                    "variance": self.result.summary.variance,
                    "display_value": self.result.summary.display_value,
                    "ci": [self.result.summary.ci.lower, self.result.summary.ci.upper],
                },
                "per_task": [
                    {
                        "task_id": t.task_id,
                        "value": t.effect.value,
                        "variance": t.effect.variance,
                        "display_value": t.display_value,
                        "n": t.effect.n,
                        "weight_share": t.weight_share,
                        "ci": [t.ci.lower, t.ci.upper],
                    }
                    for t in self.result.per_task
                ],
            },
            "outputs": self.outputs,
        }


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None


def _mean(values: dict[str, float]) -> float:
    return float(np.mean(list(values.values()))) if values else 0.0


def _task_effect(exp: Experiment, metric: MetricSpec, effect_type: str) -> tuple[EffectSize, TaskDiagnostics]:
    diag = TaskDiagnostics(exp.task_id, exp.display_name, n_pairs=0)

    if metric.kind == "correlation":
        r, n = parse_correlation_record(_read_bytes(exp.treatment_path), source=str(exp.treatment_path))
        diag.n_pairs = n
        return effect_corr(r, n), diag

    assert exp.control_path is not None
    if metric.kind == "ndcg":
        assert exp.qrels_path is not None
        qrels = parse_qrels(_read_bytes(exp.qrels_path), source=str(exp.qrels_path))
        t_run = parse_run(_read_bytes(exp.treatment_path), source=str(exp.treatment_path))
        c_run = parse_run(_read_bytes(exp.control_path), source=str(exp.control_path))
        t_vals = ndcg_at_k(t_run, qrels, metric.k)
        c_vals = ndcg_at_k(c_run, qrels, metric.k)
        diag.judged_treatment = _mean(judged_at_k(t_run, qrels, metric.k))
        diag.judged_control = _mean(judged_at_k(c_run, qrels, metric.k))
    else:
        t_file = parse_sample_metrics(_read_bytes(exp.treatment_path), source=str(exp.treatment_path))
        c_file = parse_sample_metrics(_read_bytes(exp.control_path), source=str(exp.control_path))
        if metric.kind == "accuracy":
            assert exp.gold_path is not None
            gold = parse_sample_metrics(_read_bytes(exp.gold_path), source=str(exp.gold_path))
            try:
                t_vals = accuracy_per_sample(t_file, gold)
                c_vals = accuracy_per_sample(c_file, gold)
            except AlignmentError as exc:
                raise AlignmentError(f"task {exp.task_id!r}: {exc}", exc.missing) from None
        else:
            t_vals, c_vals = dict(t_file.values), dict(c_file.values)

    paired = pair(t_vals, c_vals)
    if paired.dropped:
        logger.warning("task %s: dropped unpaired ids %s", exp.task_id, ", ".join(paired.dropped))
    diag.n_pairs = paired.n
    diag.dropped_ids = list(paired.dropped)
    diag.mean_treatment = float(np.mean(paired.treatment))
    diag.mean_control = float(np.mean(paired.control))
    return compute_effect(effect_type, paired), diag


def _guarded_task(exp: Experiment, metric: MetricSpec, effect_type: str) -> tuple[EffectSize, TaskDiagnostics]:
    try:
        return _task_effect(exp, metric, effect_type)
    except StatisticsError as exc:
        raise type(exc)(f"task {exp.task_id!r}: {exc}") from None


def analyze(manifest: Manifest, jobs: int = 1) -> RunReport:
    """Run ingest -> metrics -> pairing -> effects -> pooling for every task."""
    metric = MetricSpec.parse(manifest.metric)
    exps = manifest.experiments
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            outcomes = list(pool_exec.map(lambda e: _guarded_task(e, metric, manifest.effect_type), exps))
    else:
        outcomes = [_guarded_task(e, metric, manifest.effect_type) for e in exps]
    effects = [eff for eff, _ in outcomes]
    diagnostics = [diag for _, diag in outcomes]
    result = pool(effects, [e.task_id for e in exps], manifest.alpha)
    return RunReport(manifest, diagnostics, result)


def _metric_header(metric: MetricSpec) -> str:
    if metric.kind == "ndcg":
        return f"nDCG@{metric.k} (C → T)"
    if metric.kind == "accuracy":
        return "Accuracy (C → T)"
    return "Metric (C → T)"


def render_outputs(report: RunReport) -> tuple[bytes, str]:
    m = report.manifest
    metric = MetricSpec.parse(m.metric)
    metric_notes, judged_notes = {}, {}
    for d in report.diagnostics:
        if d.mean_control is not None and d.mean_treatment is not None:
            metric_notes[d.task_id] = f"{d.mean_control:.3f} → {d.mean_treatment:.3f}"
        if d.judged_control is not None and d.judged_treatment is not None:
            judged_notes[d.task_id] = f"{d.judged_control * 100:.0f}% → {d.judged_treatment * 100:.0f}%"
    spec = build_forest_spec(
        report.result,
        display_names=m.display_names,
        title=m.title or f"Meta-analysis ({m.effect_type}, {metric})",
        x_axis_label=m.x_axis_label or AXIS_LABELS[m.effect_type],
        metric_annotations=metric_notes,
        judged_annotations=judged_notes,
        metric_header=_metric_header(metric),
        judged_header=f"J@{metric.k} (C → T)" if metric.kind == "ndcg" else "",
    )
    svg = render_forest_svg(spec)

    lines = [
        f"# {spec.title}",
        "",
        f"Metric: {metric}; effect type: {m.effect_type}; alpha: {m.alpha:g}",
        "",
        render_table(report.result, m.display_names).rstrip("\n"),
        "",
        "## Per-task diagnostics",
        "",
        "| Task | Pairs | Dropped | Control | Treatment | J control | J treatment |",
        "| --- | ---: | ---: | ---: | ---: | ---: | ---: |",
    ]

    def fmt(x: float | None, pct: bool = False) -> str:
        if x is None:
            return "-"
        return f"{x * 100:.1f}%" if pct else f"{x:.4f}"

    for d in report.diagnostics:
        lines.append(
            f"| {d.display_name.replace('|', chr(92) + '|')} | {d.n_pairs} | {len(d.dropped_ids)} | "
            f"{fmt(d.mean_control)} | {fmt(d.mean_treatment)} | "
            f"{fmt(d.judged_control, True)} | {fmt(d.judged_treatment, True)} |"
        )
    return svg, "\n".join(lines) + "\n"


def _atomic_write_all(files: list[tuple[Path, bytes]]) -> None:
    """Write every file to a temp sibling first, then rename them into place."""
    staged: list[tuple[str, Path]] = []
    try:
        for path, data in files:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(f"metaeval: {kind}: {exc}", file=sys.stderr)
    return code


def run(
    manifest_path: str | Path,
    out_svg: str | Path,
    out_md: str | Path,
    effect_type: str | None = None,
    alpha: float | None = None,
    out_json: str | Path | None = None,
    jobs: int = 1,
) -> int:
    """Run the whole analysis and write the artifacts; returns an exit code."""
    manifest_path = Path(manifest_path)
    try:
        try:
            raw = manifest_path.read_bytes()
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {manifest_path}: {exc.strerror or exc}") from None
        manifest = load_manifest(raw, base_dir=manifest_path.parent)
        manifest = manifest.with_overrides(effect_type=effect_type, alpha=alpha)
        report = analyze(manifest, jobs=jobs)
        svg, md = render_outputs(report)
        files = [(Path(out_svg), svg), (Path(out_md), md.encode("utf-8"))]
        report.outputs = [str(p) for p, _ in files]
        if out_json is not None:
            report.outputs.append(str(out_json))
            files.append((Path(out_json), json.dumps(report.to_dict(), indent=2).encode("utf-8") + b"\n"))
        _atomic_write_all(files)
    except ManifestError as exc:
        return _fail(EXIT_USAGE, "manifest error", exc)
    except (ParseError, AlignmentError) as exc:
        return _fail(EXIT_INGEST, "ingest error", exc)
    except (StatisticsError, RenderError) as exc:
        return _fail(EXIT_STATS, "statistical error", exc)
    except OSError as exc:
        return _fail(EXIT_INGEST, "cannot write outputs", exc)
    except MetaEvalError as exc:
        return _fail(EXIT_INGEST, "error", exc)
    for path in report.outputs:
        print(path)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _effect_type_arg(value: str) -> str:
    if value.upper() not in EFFECT_TYPES:
        raise argparse.ArgumentTypeError(f"unknown effect type {value!r}; valid values: {'|'.join(EFFECT_TYPES)}")
    return value.upper()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metaeval", description="Effect-size meta-analysis over multi-task evaluations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("analyze", help="pool per-task effects and write a forest plot and report")
    p.add_argument("--config", required=True, help="JSON experiment manifest")
    p.add_argument("--effect-type", type=_effect_type_arg, help="override the manifest: MD|SMD|CORR")
    p.add_argument("--alpha", type=float, help="override the manifest significance level")
    p.add_argument("--out-svg", required=True, help="forest plot output path")
    p.add_argument("--out-md", required=True, help="markdown report output path")
    p.add_argument("--out-json", help="optional machine-readable run report")
    p.add_argument("--jobs", type=int, default=1, help="tasks processed in parallel (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    return run(
        args.config,
        args.out_svg,
        args.out_md,
        effect_type=args.effect_type,
        alpha=args.alpha,
        out_json=args.out_json,
        jobs=max(1, args.jobs),
    )


if __name__ == "__main__":
    sys.exit(main())
