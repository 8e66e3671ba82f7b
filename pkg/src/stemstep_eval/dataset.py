"""StemStep dataset handling: parse, normalize, deduplicate, split, stats.

A dataset file is UTF-8 JSON Lines: one object per line with fields
``id`` (optional), ``subject`` ("physics" | "math"), ``question``,
``steps`` (non-empty array of strings), ``final_answer``, and optional
``topic``. Text fields are normalized to plain ASCII-ish text on parse
(inline LaTeX stripped or substituted).
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Optional, Union

from . import metrics

logger = logging.getLogger(__name__)

SUBJECTS = ("physics", "math")

# Character width of one step-length histogram bucket.
STEP_LENGTH_BUCKET = 50

DEFAULT_DEDUPE_THRESHOLD = 0.9
DEFAULT_SPLIT_RATIOS = (0.6, 0.2, 0.2)


class DatasetError(ValueError):
    """Malformed dataset content; carries the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class QuestionRecord:
    id: str
    subject: str
    question: str
    steps: list[str]
    final_answer: str
    topic: Optional[str] = None

    def __post_init__(self):
        if self.subject not in SUBJECTS:
            raise DatasetError(f"unknown subject {self.subject!r} (expected one of {SUBJECTS})")
        if not self.question.strip():
            raise DatasetError(f"record {self.id!r} has an empty question")
        if not self.steps:
            raise DatasetError(f"record {self.id!r} has an empty steps list")
        if any(not step.strip() for step in self.steps):
            raise DatasetError(f"record {self.id!r} has an empty step")
        if not self.final_answer.strip():
            raise DatasetError(f"record {self.id!r} has an empty final_answer")

    def reference_text(self) -> str:
        """Ground-truth text used for gating and scoring: the final answer
        followed by every solution step."""
        return " ".join([self.final_answer, *self.steps])

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "subject": self.subject,
            "question": self.question,
            "steps": self.steps,
            "final_answer": self.final_answer,
        }
        if self.topic is not None:
            out["topic"] = self.topic
        return out


@dataclass
class DatasetStats:
    record_count: int
    mean_steps_per_question: float
    step_count_histogram: dict[int, int]
    mean_step_length_chars: float
    step_length_histogram: dict[int, int]


@dataclass
class DatasetSplit:
    train: list[QuestionRecord]
    validation: list[QuestionRecord]
    test: list[QuestionRecord]
    seed: int
    ratios: tuple[float, float, float]


# ---------------------------------------------------------------------------
# Normalization

_MATH_FUNCS = ("sin", "cos", "tan")

_FRAC_RE = re.compile(r"\\frac\{([^{}]*)\}\{([^{}]*)\}")
_SQRT_RE = re.compile(r"\\sqrt\{([^{}]*)\}")
_SUPERSCRIPT_RE = re.compile(r"\^\{([^{}]*)\}")
_SUBSCRIPT_RE = re.compile(r"_\{([^{}]*)\}")
_COMMAND_RE = re.compile(r"\\([A-Za-z]+)")
_WS_RE = re.compile(r"\s+")

# Fixed-string substitutions applied after the brace-argument forms above.
_SIMPLE_SUBS = [
    ("^{\\circ}", " degrees"),
    ("^\\circ", " degrees"),
    ("\\degree", " degrees"),
    ("\\times", " x "),
    ("\\theta", "theta"),
    *((f"\\{name}", name) for name in _MATH_FUNCS),
    ("\\,", " "),
    ("~", " "),
    ("\\(", " "),
    ("\\)", " "),
    ("\\[", " "),
    ("\\]", " "),
    ("$", " "),
]


def normalize_text(raw: str) -> str:
    """Strip math delimiters and substitute the known LaTeX commands.

    Unknown commands keep their name with the backslash dropped (logged).
    Idempotent: a second pass is a no-op.
    """
    text = raw
    # Innermost-first so nested \frac / \sqrt arguments resolve.
    while True:
        replaced = _FRAC_RE.sub(r"\1/\2", text)
        replaced = _SQRT_RE.sub(r"sqrt(\1)", replaced)
        if replaced == text:
            break
        text = replaced
    for old, new in _SIMPLE_SUBS:
        text = text.replace(old, new)
    text = _SUPERSCRIPT_RE.sub(r"^\1", text)
    text = _SUBSCRIPT_RE.sub(r"_\1", text)

    def _drop_backslash(match: re.Match) -> str:
        logger.debug("unknown LaTeX command %r passed through", match.group(0))
        return match.group(1)

    text = _COMMAND_RE.sub(_drop_backslash, text)
    text = text.replace("\\", " ")
    return _WS_RE.sub(" ", text).strip()


# ---------------------------------------------------------------------------
# Parse / serialize

Source = Union[str, Path, IO[bytes], IO[str]]


def _lines(source: Source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            yield from handle
        return
    for line in source:
        yield line.decode("utf-8") if isinstance(line, bytes) else line


def parse_dataset(source: Source, normalize: bool = True) -> list[QuestionRecord]:
    """Parse a JSONL dataset, preserving input order.

    Records without an explicit ``id`` get the 0-based line index as a
    decimal string. Raises DatasetError with the line number on malformed
    lines, duplicate ids, or empty steps.
    """
    records: list[QuestionRecord] = []
    seen_ids: set[str] = set()
    for index, line in enumerate(_lines(source)):
        if not line.strip():
            continue
        line_no = index + 1
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc.msg}", line=line_no) from exc
        if not isinstance(raw, dict):
            raise DatasetError("record is not an object", line=line_no)
        try:
            record_id = str(raw["id"]) if "id" in raw else str(index)
            clean = normalize_text if normalize else (lambda s: s)
            steps = raw["steps"]
            if not isinstance(steps, list):
                raise DatasetError("steps must be an array of strings", line=line_no)
            record = QuestionRecord(
                id=record_id,
                subject=raw["subject"],
                question=clean(str(raw["question"])),
                steps=[clean(str(step)) for step in steps],
                final_answer=clean(str(raw["final_answer"])),
                topic=raw.get("topic"),
            )
        except KeyError as exc:
            raise DatasetError(f"missing field {exc.args[0]!r}", line=line_no) from exc
        except DatasetError as exc:
            if exc.line is None:
                raise DatasetError(str(exc), line=line_no) from exc
            raise
        if record.id in seen_ids:
            raise DatasetError(f"duplicate id {record.id!r}", line=line_no)
        seen_ids.add(record.id)
        records.append(record)
    return records


def serialize_dataset(records: Iterable[QuestionRecord], sink: Union[str, Path, IO[str]]) -> None:
    """Write records back out as JSONL (one object per line, keys ordered)."""

    def _write(handle: IO[str]) -> None:
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as handle:
            _write(handle)
    else:
        _write(sink)


# ---------------------------------------------------------------------------
# Deduplicate / split / stats


def deduplicate(
    records: list[QuestionRecord], threshold: float = DEFAULT_DEDUPE_THRESHOLD
) -> list[QuestionRecord]:
    """Drop records whose question is near-duplicate of an earlier one.

    Greedy scan in input order; a record is dropped when the TF-IDF cosine
    between its question and any previously kept question reaches the
    threshold. The idf is fitted over all input questions. Thresholds
    above 1.0 keep everything.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if not records:
        return []
    docs = [metrics.tokenize(record.question) for record in records]
    idf = metrics.fit_idf(docs)
    vectors = [metrics.vectorize(idf, doc) for doc in docs]

    kept: list[QuestionRecord] = []
    kept_norms: list[float] = []
    # term -> [(kept index, weight)] so each new record only touches
    # kept vectors that share vocabulary with it
    postings: dict[str, list[tuple[int, float]]] = {}
    for record, vector in zip(records, vectors):
        dots: dict[int, float] = {}
        for term, weight in vector.weights.items():
            for kept_idx, kept_weight in postings.get(term, ()):
                dots[kept_idx] = dots.get(kept_idx, 0.0) + weight * kept_weight
        duplicate = False
        if vector.norm > 0.0:
            for kept_idx, dot in dots.items():
                # slack so byte-identical texts clear an exact 1.0 threshold
                if dot / (vector.norm * kept_norms[kept_idx]) >= threshold - 1e-9:
                    duplicate = True
                    break
        if duplicate:
            continue
        index = len(kept)
        kept.append(record)
        kept_norms.append(vector.norm)
        for term, weight in vector.weights.items():
            postings.setdefault(term, []).append((index, weight))
    return kept


def split(
    records: list[QuestionRecord],
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic seeded shuffle, then partition train/validation/test.

    Validation and test sizes are floored; the remainder goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be three non-negative reals, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1.0, got {sum(ratios)}")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    total = len(shuffled)
    n_validation = int(total * ratios[1])
    n_test = int(total * ratios[2])
    n_train = total - n_validation - n_test
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_validation],
        test=shuffled[n_train + n_validation :],
        seed=seed,
        ratios=tuple(ratios),
    )


def compute_stats(records: list[QuestionRecord]) -> DatasetStats:
    """Step-count and step-length summary over a record list."""
    record_count = len(records)
    step_count_histogram: dict[int, int] = {}
    step_length_histogram: dict[int, int] = {}
    total_steps = 0
    total_step_chars = 0
    for record in records:
        count = len(record.steps)
        total_steps += count
        step_count_histogram[count] = step_count_histogram.get(count, 0) + 1
        for step in record.steps:
            length = len(step)
            total_step_chars += length
            bucket = (length // STEP_LENGTH_BUCKET) * STEP_LENGTH_BUCKET
            step_length_histogram[bucket] = step_length_histogram.get(bucket, 0) + 1
    return DatasetStats(
        record_count=record_count,
        mean_steps_per_question=(total_steps / record_count) if record_count else 0.0,
        step_count_histogram=dict(sorted(step_count_histogram.items())),
        mean_step_length_chars=(total_step_chars / total_steps) if total_steps else 0.0,
        step_length_histogram=dict(sorted(step_length_histogram.items())),
    )
