"""Parsers for TREC runs and qrels, per-sample metric files and the
experiment manifest.

Every parser accepts ``bytes``, ``str`` or a binary/text file object and
either returns an immutable structure or raises a :class:`ParseError`
(or :class:`ManifestError`) carrying the offending line number.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterator, Mapping, Union

from .errors import DuplicateEntryError, ManifestError, ParseError

Source = Union[bytes, bytearray, str, IO[bytes], IO[str]]

EFFECT_TYPES = ("MD", "SMD", "CORR")
MODES = ("retrieval", "classification")

_FIELD_SEP = re.compile(r"[ \t]+")


def _read_text(stream: Source, source: str | None = None) -> str:
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, str):
        return stream
    data = bytes(stream)
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise ParseError("input is not valid UTF-8", line=line, source=source) from None


def _records(text: str) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` for every non-blank line."""
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip(" \t\r")
        if not line:
            continue
        yield lineno, _FIELD_SEP.split(line)


def _finite_float(token: str, what: str, lineno: int, source: str | None) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not numeric", line=lineno, source=source) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} {token!r} is not finite", line=lineno, source=source)
    return value


def _int(token: str, what: str, lineno: int, source: str | None) -> int:
    # int() accepts "1_000" and surrounding unicode whitespace; be stricter.
    if not re.fullmatch(r"[+-]?[0-9]+", token):
        raise ParseError(f"{what} {token!r} is not an integer", line=lineno, source=source)
    return int(token)


# --------------------------------------------------------------------------
# qrels


@dataclass(frozen=True)
class Qrels:
    """Relevance judgments, grouped by query: ``judgments[qid][docid] -> grade``."""

    judgments: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen = {q: MappingProxyType(dict(docs)) for q, docs in self.judgments.items()}
        object.__setattr__(self, "judgments", MappingProxyType(frozen))

    def __len__(self) -> int:
        return sum(len(docs) for docs in self.judgments.values())

    def __contains__(self, key: object) -> bool:
        if not isinstance(key, tuple) or len(key) != 2:
            return False
        qid, docid = key
        return docid in self.judgments.get(qid, {})

    @property
    def entries(self) -> dict[tuple[str, str], int]:
        return {(q, d): g for q, docs in self.judgments.items() for d, g in docs.items()}

    def query_ids(self) -> list[str]:
        return list(self.judgments)

    def for_query(self, qid: str) -> Mapping[str, int]:
        return self.judgments.get(qid, MappingProxyType({}))


def parse_qrels(stream: Source, source: str | None = None) -> Qrels:
    """Parse a TREC qrels file (``qid iter docid grade``)."""
    text = _read_text(stream, source)
    judgments: dict[str, dict[str, int]] = {}
    for lineno, fields in _records(text):
        if len(fields) != 4:
            raise ParseError(
                f"expected 4 fields (qid iter docid grade), found {len(fields)}",
                line=lineno,
                source=source,
            )
        qid, _iter, docid, grade_tok = fields
        grade = _int(grade_tok, "grade", lineno, source)
        if grade < 0:
            raise ParseError(f"negative grade {grade}", line=lineno, source=source)
        docs = judgments.setdefault(qid, {})
        if docid in docs:
            raise DuplicateEntryError(
                f"duplicate judgment for query {qid!r}, document {docid!r}",
                line=lineno,
                source=source,
            )
        docs[docid] = grade
    return Qrels(judgments)


# --------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RankedRun:
    """Per-query ranked lists of ``(doc_id, score)``, best first."""

    queries: Mapping[str, tuple[tuple[str, float], ...]] = field(default_factory=dict)
    system_tag: str = ""

    def __post_init__(self) -> None:
        frozen = {q: tuple((d, float(s)) for d, s in docs) for q, docs in self.queries.items()}
        object.__setattr__(self, "queries", MappingProxyType(frozen))

    def ranking(self, qid: str) -> tuple[str, ...]:
        return tuple(d for d, _ in self.queries.get(qid, ()))


def _sort_key(item: tuple[str, float]) -> tuple[float, str]:
    return item[1], item[0]


def sort_ranking(docs: list[tuple[str, float]]) -> list[tuple[str, float]]:
    """Order by score descending, ties by doc id descending."""
    return sorted(docs, key=_sort_key, reverse=True)


def parse_run(stream: Source, source: str | None = None) -> RankedRun:
    """Parse a TREC run file (``qid Q0 docid rank score tag``).

    The rank column is validated but ignored; lists are re-sorted by
    score (descending) with doc ids descending as tie-breaker.
    """
    text = _read_text(stream, source)
    queries: dict[str, list[tuple[str, float]]] = {}
    seen: dict[str, set[str]] = {}
    tag: str | None = None
    for lineno, fields in _records(text):
        if len(fields) != 6:
            raise ParseError(
                f"expected 6 fields (qid Q0 docid rank score tag), found {len(fields)}",
                line=lineno,
                source=source,
            )
        qid, _q0, docid, rank_tok, score_tok, line_tag = fields
        _int(rank_tok, "rank", lineno, source)
        score = _finite_float(score_tok, "score", lineno, source)
        if tag is None:
            tag = line_tag
        elif line_tag != tag:
            raise ParseError(
                f"run mixes system tags {tag!r} and {line_tag!r}", line=lineno, source=source
            )
        docs = seen.setdefault(qid, set())
        if docid in docs:
            raise DuplicateEntryError(
                f"document {docid!r} appears twice for query {qid!r}",
                line=lineno,
                source=source,
            )
        docs.add(docid)
        queries.setdefault(qid, []).append((docid, score))
    return RankedRun({q: tuple(sort_ranking(docs)) for q, docs in queries.items()}, tag or "")


def format_run(run: RankedRun) -> str:
    """Serialize a run back to TREC format; ``parse_run`` inverts this."""
    tag = run.system_tag or "run"
    lines = []
    for qid, docs in run.queries.items():
        for rank, (docid, score) in enumerate(docs, start=1):
            lines.append(f"{qid} Q0 {docid} {rank} {score!r} {tag}")
    return "\n".join(lines) + ("\n" if lines else "")


# --------------------------------------------------------------------------
# per-sample metric files


@dataclass(frozen=True)
class SampleMetricFile:
    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    def __len__(self) -> int:
        return len(self.values)


def parse_sample_metrics(stream: Source, source: str | None = None) -> SampleMetricFile:
    """Parse ``sample_id<TAB>value`` lines into a mapping."""
    text = _read_text(stream, source)
    values: dict[str, float] = {}
    for lineno, fields in _records(text):
        if len(fields) != 2:
            raise ParseError(
                f"expected 2 fields (sample_id value), found {len(fields)}",
                line=lineno,
                source=source,
            )
        sample_id, value_tok = fields
        if sample_id in values:
            raise DuplicateEntryError(f"duplicate sample id {sample_id!r}", line=lineno, source=source)
        values[sample_id] = _finite_float(value_tok, "value", lineno, source)
    return SampleMetricFile(values)


def parse_correlation_record(stream: Source, source: str | None = None) -> tuple[float, int]:
    """Parse the one-record ``r<TAB>n`` file used by correlation tasks."""
    text = _read_text(stream, source)
    records = list(_records(text))
    if len(records) != 1:
        raise ParseError(
            f"expected exactly one 'r n' record, found {len(records)}",
            line=records[1][0] if len(records) > 1 else None,
            source=source,
        )
    lineno, fields = records[0]
    if len(fields) != 2:
        raise ParseError(f"expected 2 fields (r n), found {len(fields)}", line=lineno, source=source)
    r = _finite_float(fields[0], "correlation", lineno, source)
    n = _int(fields[1], "sample count", lineno, source)
    return r, n


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class Experiment:
    task_id: str
    display_name: str
    mode: str
    treatment_path: Path
    control_path: Path | None = None
    qrels_path: Path | None = None
    gold_path: Path | None = None


@dataclass(frozen=True)
class Manifest:
    experiments: tuple[Experiment, ...]
    metric: str
    effect_type: str
    alpha: float = 0.05
    title: str = ""
    x_axis_label: str = ""

    def __post_init__(self) -> None:
        _validate_manifest(self)

    def with_overrides(self, effect_type: str | None = None, alpha: float | None = None) -> "Manifest":
        changes: dict[str, object] = {}
        if effect_type is not None:
            changes["effect_type"] = _effect_type(effect_type)
        if alpha is not None:
            changes["alpha"] = alpha
        return replace(self, **changes) if changes else self

    @property
    def display_names(self) -> dict[str, str]:
        return {e.task_id: e.display_name for e in self.experiments}


def _effect_type(value: object) -> str:
    if not isinstance(value, str) or value.upper() not in EFFECT_TYPES:
        raise ManifestError(f"unknown effect_type {value!r}; valid values: {'|'.join(EFFECT_TYPES)}")
    return value.upper()


def _validate_manifest(m: Manifest) -> None:
    from .metrics import MetricSpec

    if not m.experiments:
        raise ManifestError("manifest lists no experiments")
    _effect_type(m.effect_type)
    if isinstance(m.alpha, bool) or not isinstance(m.alpha, (int, float)) or not 0 < m.alpha < 1:
        raise ManifestError(f"alpha must lie strictly between 0 and 1, got {m.alpha!r}")
    try:
        spec = MetricSpec.parse(m.metric)
    except ValueError as exc:
        raise ManifestError(str(exc)) from None
    if spec.kind == "correlation" and m.effect_type != "CORR":
        raise ManifestError("metric 'correlation' supplies r and n directly and requires effect_type CORR")

    seen: set[str] = set()
    for e in m.experiments:
        if e.task_id in seen:
            raise ManifestError(f"duplicate task_id {e.task_id!r}")
        seen.add(e.task_id)
        if e.mode not in MODES:
            raise ManifestError(f"task {e.task_id!r}: mode must be one of {', '.join(MODES)}")
        if e.mode == "retrieval":
            if e.qrels_path is None:
                raise ManifestError(f"task {e.task_id!r}: retrieval entries need a qrels_path")
            if spec.kind != "ndcg":
                raise ManifestError(f"task {e.task_id!r}: retrieval mode requires an ndcg@k metric")
        else:
            if e.qrels_path is not None:
                raise ManifestError(f"task {e.task_id!r}: classification entries take no qrels_path")
            if spec.kind == "ndcg":
                raise ManifestError(f"task {e.task_id!r}: ndcg@k needs retrieval mode")
            if spec.kind == "accuracy" and e.gold_path is None:
                raise ManifestError(f"task {e.task_id!r}: accuracy needs a gold_path")
        if spec.kind != "correlation" and e.control_path is None:
            raise ManifestError(f"task {e.task_id!r}: missing required key 'control_path'")


def _require(obj: Mapping[str, object], key: str, where: str) -> object:
    if key not in obj:
        raise ManifestError(f"{where}: missing required key {key!r}")
    return obj[key]


def _string(value: object, key: str, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ManifestError(f"{where}: {key!r} must be a non-empty string")
    return value


def load_manifest(stream: Source, base_dir: str | Path | None = None) -> Manifest:
    """Load and validate a JSON experiment manifest.

    Relative paths are resolved against ``base_dir`` when given.
    """
    text = _read_text(stream)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")

    base = Path(base_dir) if base_dir is not None else None

    def path(value: object, key: str, where: str) -> Path:
        p = Path(_string(value, key, where))
        return base / p if base is not None and not p.is_absolute() else p

    raw_experiments = _require(doc, "experiments", "manifest")
    if not isinstance(raw_experiments, list):
        raise ManifestError("manifest: 'experiments' must be an array")
    experiments = []
    for i, raw in enumerate(raw_experiments):
        where = f"experiments[{i}]"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: must be an object")
        task_id = _string(_require(raw, "task_id", where), "task_id", where)
        optional = {}
        for key in ("control_path", "qrels_path", "gold_path"):
            if raw.get(key) is not None:
                optional[key] = path(raw[key], key, where)
        experiments.append(
            Experiment(
                task_id=task_id,
                display_name=_string(raw.get("display_name", task_id), "display_name", where),
                mode=_string(_require(raw, "mode", where), "mode", where),
                treatment_path=path(_require(raw, "treatment_path", where), "treatment_path", where),
                **optional,
            )
        )

    metric = _string(_require(doc, "metric", "manifest"), "metric", "manifest")
    effect_type = _effect_type(_require(doc, "effect_type", "manifest"))
    alpha = doc.get("alpha", 0.05)
    return Manifest(
        experiments=tuple(experiments),
        metric=metric,
        effect_type=effect_type,
        alpha=alpha,
        title=str(doc.get("title", "")),
        x_axis_label=str(doc.get("x_axis_label", "")),
    )
