"""Experiment report model: per-question outcomes, aggregates, human-label
accuracy, and file emission (structured JSON plus delimited tables).

Serialization is deterministic — sorted keys, no timestamps — so two runs
with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

from .metrics import MetricReport
from .prompts import RenderedPrompt, PromptStrategy

STRUCTURED = "structured"
TABULAR = "tabular"

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
AGGREGATES_CSV = "aggregates.csv"
SWEEP_CSV = "sweep.csv"


class LabelError(ValueError):
    pass


@dataclass
class Attempt:
    text: Optional[str]
    gate_similarity: Optional[float]
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"text": self.text, "gate_similarity": self.gate_similarity, "error": self.error}

    @classmethod
    def from_dict(cls, raw: dict) -> "Attempt":
        return cls(
            text=raw.get("text"),
            gate_similarity=raw.get("gate_similarity"),
            error=raw.get("error"),
        )


@dataclass
class QuestionOutcome:
    question_id: str
    prompt: RenderedPrompt
    attempts: list[Attempt]
    final_text: Optional[str]
    discarded: bool
    metrics: Optional[MetricReport]
    human_label: Optional[bool] = None

    @property
    def accepted_similarity(self) -> Optional[float]:
        if self.discarded or not self.attempts:
            return None
        return self.attempts[-1].gate_similarity

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "prompt": {
                "text": self.prompt.text,
                "strategy": _strategy_dict(self.prompt.strategy),
                "exemplar_ids": list(self.prompt.exemplar_ids),
                "target_id": self.prompt.target_id,
            },
            "attempts": [attempt.to_dict() for attempt in self.attempts],
            "final_text": self.final_text,
            "discarded": self.discarded,
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
            "human_label": self.human_label,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "QuestionOutcome":
        prompt_raw = raw["prompt"]
        prompt = RenderedPrompt(
            text=prompt_raw["text"],
            strategy=PromptStrategy(**prompt_raw["strategy"]),
            exemplar_ids=tuple(prompt_raw["exemplar_ids"]),
            target_id=prompt_raw["target_id"],
        )
        metrics_raw = raw.get("metrics")
        return cls(
            question_id=raw["question_id"],
            prompt=prompt,
            attempts=[Attempt.from_dict(a) for a in raw["attempts"]],
            final_text=raw.get("final_text"),
            discarded=raw["discarded"],
            metrics=MetricReport.from_dict(metrics_raw) if metrics_raw is not None else None,
            human_label=raw.get("human_label"),
        )


def _strategy_dict(strategy: PromptStrategy) -> dict:
    return {"kind": strategy.kind, "k": strategy.k, "self_examples": strategy.self_examples}


def metric_values(report: MetricReport) -> dict[str, float]:
    """Flatten a MetricReport into named scalar columns."""
    out = {}
    for name, prf in (("rouge1", report.rouge1), ("rouge2", report.rouge2), ("rougeL", report.rougeL)):
        out[f"{name}_precision"] = prf.precision
        out[f"{name}_recall"] = prf.recall
        out[f"{name}_f1"] = prf.f1
    out["meteor"] = report.meteor
    out["tfidf_cosine"] = report.tfidf_cosine
    if report.embed_f1 is not None:
        out["embed_f1"] = report.embed_f1
    return out


def compute_aggregates(outcomes: Sequence[QuestionOutcome]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation per metric over the
    non-discarded outcomes."""
    columns: dict[str, list[float]] = {}
    for outcome in outcomes:
        if outcome.discarded or outcome.metrics is None:
            continue
        for name, value in metric_values(outcome.metrics).items():
            columns.setdefault(name, []).append(value)
    return {
        name: {"mean": statistics.fmean(values), "std": statistics.pstdev(values)}
        for name, values in columns.items()
    }


@dataclass
class ExperimentReport:
    config: dict
    per_question: list[QuestionOutcome]
    aggregates: dict[str, dict[str, float]] = field(default_factory=dict)
    discard_rate: float = 0.0
    scored_count: int = 0
    accuracy: Optional[float] = None

    @classmethod
    def build(cls, config: dict, outcomes: Iterable[QuestionOutcome]) -> "ExperimentReport":
        ordered = sorted(outcomes, key=lambda o: o.question_id)
        total = len(ordered)
        discarded = sum(1 for o in ordered if o.discarded)
        return cls(
            config=config,
            per_question=ordered,
            aggregates=compute_aggregates(ordered),
            discard_rate=(discarded / total) if total else 0.0,
            scored_count=total - discarded,
            accuracy=None,
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "per_question": [outcome.to_dict() for outcome in self.per_question],
            "aggregates": self.aggregates,
            "discard_rate": self.discard_rate,
            "scored_count": self.scored_count,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentReport":
        return cls(
            config=raw["config"],
            per_question=[QuestionOutcome.from_dict(o) for o in raw["per_question"]],
            aggregates=raw["aggregates"],
            discard_rate=raw["discard_rate"],
            scored_count=raw["scored_count"],
            accuracy=raw.get("accuracy"),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentReport":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


# ---------------------------------------------------------------------------
# Human labels


def parse_labels(source: Union[str, Path, IO[str], IO[bytes], Iterable[str]]) -> dict[str, bool]:
    """Two-column delimited labels: ``question_id,true|false`` per line."""
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = (
            line.decode("utf-8") if isinstance(line, bytes) else line for line in source
        )
    labels: dict[str, bool] = {}
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 2:
            raise LabelError(f"labels line {number}: expected 'id,true|false', got {line!r}")
        question_id, value = parts
        if value.lower() not in ("true", "false"):
            raise LabelError(f"labels line {number}: expected true or false, got {value!r}")
        if question_id in labels:
            raise LabelError(f"labels line {number}: duplicate label for id {question_id!r}")
        labels[question_id] = value.lower() == "true"
    return labels


def import_human_labels(
    report: ExperimentReport, source: Union[str, Path, IO[str], IO[bytes], Iterable[str]]
) -> ExperimentReport:
    """Attach human match labels to outcomes and recompute accuracy.

    Accuracy is the labeled-true fraction among labeled outcomes only;
    unlabeled outcomes are excluded. Unknown ids raise LabelError.
    """
    labels = parse_labels(source)
    by_id = {outcome.question_id: outcome for outcome in report.per_question}
    unknown = sorted(set(labels) - set(by_id))
    if unknown:
        raise LabelError(f"labels reference unknown question ids: {', '.join(unknown)}")
    for question_id, value in labels.items():
        by_id[question_id].human_label = value
    labeled = [o for o in report.per_question if o.human_label is not None]
    report.accuracy = (
        sum(1 for o in labeled if o.human_label) / len(labeled) if labeled else None
    )
    return report


# ---------------------------------------------------------------------------
# Emission


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(content)
        os.replace(handle.name, path)
    except BaseException:
        os.unlink(handle.name)
        raise


def structured_dump(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _aggregate_row(report: ExperimentReport) -> dict[str, object]:
    strategy = report.config.get("strategy", {})
    row: dict[str, object] = {
        "strategy": strategy.get("kind", ""),
        "model": report.config.get("params", {}).get("model_name", ""),
        "k": strategy.get("k", 0),
        "self_examples": strategy.get("self_examples"),
        "accuracy": report.accuracy if report.accuracy is not None else "",
        "discard_rate": report.discard_rate,
        "scored_count": report.scored_count,
        "question_count": len(report.per_question),
    }
    for name in sorted(report.aggregates):
        row[f"{name}_mean"] = report.aggregates[name]["mean"]
        row[f"{name}_std"] = report.aggregates[name]["std"]
    return row


def _csv_text(rows: list[dict[str, object]]) -> str:
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def per_question_rows(report: ExperimentReport) -> list[dict[str, object]]:
    metric_names: list[str] = []
    for outcome in report.per_question:
        if outcome.metrics is not None:
            metric_names = list(metric_values(outcome.metrics).keys())
            break
    rows = []
    for outcome in report.per_question:
        row: dict[str, object] = {
            "question_id": outcome.question_id,
            "discarded": str(outcome.discarded).lower(),
            "attempts": len(outcome.attempts),
            "gate_similarity": (
                outcome.accepted_similarity if outcome.accepted_similarity is not None else ""
            ),
            "last_error": outcome.attempts[-1].error or "" if outcome.attempts else "",
        }
        values = metric_values(outcome.metrics) if outcome.metrics is not None else {}
        for name in metric_names:
            row[name] = values.get(name, "")
        row["human_label"] = (
            "" if outcome.human_label is None else str(outcome.human_label).lower()
        )
        rows.append(row)
    return rows


def emit_report(
    report: ExperimentReport,
    output_dir: Union[str, Path],
    formats: Sequence[str] = (STRUCTURED, TABULAR),
) -> list[Path]:
    """Write the report files atomically; returns the paths written."""
    out = Path(output_dir)
    written = []
    for fmt in formats:
        if fmt == STRUCTURED:
            path = out / REPORT_JSON
            _atomic_write(path, structured_dump(report))
            written.append(path)
        elif fmt == TABULAR:
            per_question = out / REPORT_CSV
            _atomic_write(per_question, _csv_text(per_question_rows(report)))
            aggregates = out / AGGREGATES_CSV
            _atomic_write(aggregates, _csv_text([_aggregate_row(report)]))
            written.extend([per_question, aggregates])
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


def emit_sweep(
    results: Sequence[tuple[int, ExperimentReport]], output_dir: Union[str, Path]
) -> Path:
    """Per-K aggregate table for plotting sweep curves."""
    rows = []
    for k, report in results:
        row = _aggregate_row(report)
        row["k"] = k
        rows.append(row)
    path = Path(output_dir) / SWEEP_CSV
    _atomic_write(path, _csv_text(rows))
    return path


SCORE_JSON = "score.json"
SCORE_CSV = "score.csv"


def emit_scores(
    scored: Sequence[tuple[str, MetricReport]], output_dir: Union[str, Path]
) -> list[Path]:
    """Offline pair-scoring output: structured dump plus a per-pair table
    with a trailing aggregate of means."""
    out = Path(output_dir)
    pairs = {pair_id: report.to_dict() for pair_id, report in scored}
    columns: dict[str, list[float]] = {}
    rows = []
    for pair_id, report in scored:
        values = metric_values(report)
        for name, value in values.items():
            columns.setdefault(name, []).append(value)
        rows.append({"id": pair_id, **values})
    means = {name: statistics.fmean(values) for name, values in columns.items()}
    if rows:
        rows.append({"id": "MEAN", **means})
    json_path = out / SCORE_JSON
    _atomic_write(
        json_path,
        json.dumps({"pairs": pairs, "means": means}, indent=2, sort_keys=True, ensure_ascii=False)
        + "\n",
    )
    csv_path = out / SCORE_CSV
    _atomic_write(csv_path, _csv_text(rows))
    return [json_path, csv_path]
