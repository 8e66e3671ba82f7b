"""Experiment orchestration: configuration, the generate→gate→score loop
per question, full-split runs, and K sweeps.

Responses whose TF-IDF cosine to the ground truth falls below the gate
threshold are regenerated up to ``max_attempts`` times, then discarded.
Runs are deterministic end to end with a stub backend: exemplar selection
is similarity-ranked, per-question seeds derive from (run_seed, id), and
outcomes are ordered by question id regardless of worker scheduling.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import yaml

from . import metrics
from .backends import (
    BackendConfigError,
    BackendError,
    GenerationParams,
    HttpChatBackend,
    StubBackend,
)
from .dataset import DatasetSplit, QuestionRecord, parse_dataset, split
from .embedders import HashedGaussianEmbedder, HttpEmbedder, OneHotEmbedder
from .metrics import IdfModel, TokenEmbedder
from .prompts import (
    DEFAULT_TEMPLATES,
    PromptError,
    PromptStrategy,
    PromptTemplates,
    STRATEGY_KINDS,
    select_exemplars,
    render,
)
from .reports import Attempt, ExperimentReport, QuestionOutcome, emit_report, emit_sweep

DEFAULT_GATE_THRESHOLD = 0.3
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_API_KEY_ENV = "STEMSTEP_EVAL_API_KEY"

STRATEGY_ALIASES = {
    "baseline": "baseline_zero_shot",
    "kshot": "kshot_cot",
    "analogical": "analogical",
    "analogical-cot": "analogical_cot",
}

BACKEND_TYPES = ("http", "stub-echo", "stub-script")
EMBEDDER_TYPES = ("hash", "one-hot", "http")


class ConfigError(ValueError):
    pass


def resolve_strategy_kind(name: str) -> str:
    kind = STRATEGY_ALIASES.get(name, name)
    if kind not in STRATEGY_KINDS:
        raise ConfigError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGY_ALIASES)}"
        )
    return kind


@dataclass(frozen=True)
class BackendSpec:
    type: str = "stub-echo"
    endpoint: Optional[str] = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_ms: int = 30000
    script: Optional[list[tuple[str, str]]] = None

    def __post_init__(self):
        if self.type not in BACKEND_TYPES:
            raise ConfigError(f"unknown backend type {self.type!r}; expected one of {BACKEND_TYPES}")


@dataclass(frozen=True)
class EmbedderSpec:
    type: str = "hash"
    dim: int = 64
    seed: int = 0
    endpoint: Optional[str] = None
    timeout_ms: int = 30000

    def __post_init__(self):
        if self.type not in EMBEDDER_TYPES:
            raise ConfigError(
                f"unknown embedder type {self.type!r}; expected one of {EMBEDDER_TYPES}"
            )


@dataclass
class ExperimentConfig:
    dataset_path: Union[str, Path]
    output_dir: Union[str, Path]
    strategy: PromptStrategy = field(default_factory=lambda: PromptStrategy(kind="baseline_zero_shot"))
    split_seed: int = 0
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    run_seed: int = 0
    k_values: Optional[list[int]] = None
    gate_threshold: float = DEFAULT_GATE_THRESHOLD
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    backend: BackendSpec = field(default_factory=BackendSpec)
    params: GenerationParams = field(default_factory=GenerationParams)
    embedder: Optional[EmbedderSpec] = None
    parallelism: int = 1
    templates_path: Optional[Union[str, Path]] = None

    def validate(self) -> None:
        if not 0.0 <= self.gate_threshold <= 1.0:
            raise ConfigError(f"gate_threshold must be in [0, 1], got {self.gate_threshold}")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.k_values is not None:
            if not self.k_values:
                raise ConfigError("k_values must be non-empty when present")
            if any(k < 0 for k in self.k_values):
                raise ConfigError(f"k_values must be >= 0, got {self.k_values}")
            if not self.strategy.uses_k:
                raise ConfigError(
                    f"strategy {self.strategy.kind!r} does not take a K sweep"
                )

    def echo(self) -> dict:
        """Run-defining fields for the report; excludes execution knobs
        (parallelism, output paths) so reruns compare byte-identical."""
        return {
            "dataset_path": str(self.dataset_path),
            "split_seed": self.split_seed,
            "split_ratios": list(self.split_ratios),
            "run_seed": self.run_seed,
            "strategy": {
                "kind": self.strategy.kind,
                "k": self.strategy.k,
                "self_examples": self.strategy.self_examples,
            },
            "gate_threshold": self.gate_threshold,
            "max_attempts": self.max_attempts,
            "backend": {"type": self.backend.type, "endpoint": self.backend.endpoint},
            "params": {
                "temperature": self.params.temperature,
                "repetition_penalty": self.params.repetition_penalty,
                "max_tokens": self.params.max_tokens,
                "seed": self.params.seed,
                "model_name": self.params.model_name,
            },
            "embedder": self.embedder.type if self.embedder else None,
        }


# ---------------------------------------------------------------------------
# Config file loading


def _take(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(sorted(unknown))}")
    return {key: section[key] for key in section}


def _strategy_from_dict(raw: dict) -> PromptStrategy:
    data = _take(raw, {"kind": None, "k": None, "self_examples": None}, "strategy")
    if "kind" not in data:
        raise ConfigError("strategy.kind is required")
    if "self_examples" in data:
        # explicit null means "leave the amount unstated" (analogical only)
        self_examples = None if data["self_examples"] is None else int(data["self_examples"])
    else:
        self_examples = 0
    try:
        return PromptStrategy(
            kind=resolve_strategy_kind(data["kind"]),
            k=int(data.get("k", 0)),
            self_examples=self_examples,
        )
    except PromptError as exc:
        raise ConfigError(str(exc)) from exc


def _backend_from_dict(raw: dict) -> BackendSpec:
    data = _take(
        raw,
        {"type": None, "endpoint": None, "api_key_env": None, "timeout_ms": None, "script": None},
        "backend",
    )
    script = data.get("script")
    if script is not None:
        script = [(str(pattern), str(reply)) for pattern, reply in script]
    return BackendSpec(
        type=data.get("type", "stub-echo"),
        endpoint=data.get("endpoint"),
        api_key_env=data.get("api_key_env", DEFAULT_API_KEY_ENV),
        timeout_ms=int(data.get("timeout_ms", 30000)),
        script=script,
    )


def _params_from_dict(raw: dict) -> GenerationParams:
    data = _take(
        raw,
        {"temperature": None, "repetition_penalty": None, "max_tokens": None, "seed": None, "model_name": None},
        "params",
    )
    try:
        return GenerationParams(
            temperature=float(data.get("temperature", 0.7)),
            repetition_penalty=float(data.get("repetition_penalty", 1.1)),
            max_tokens=int(data.get("max_tokens", 1024)),
            seed=None if data.get("seed") is None else int(data["seed"]),
            model_name=str(data.get("model_name", "mistral-7b")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _embedder_from_dict(raw: dict) -> EmbedderSpec:
    data = _take(
        raw, {"type": None, "dim": None, "seed": None, "endpoint": None, "timeout_ms": None}, "embedder"
    )
    return EmbedderSpec(
        type=data.get("type", "hash"),
        dim=int(data.get("dim", 64)),
        seed=int(data.get("seed", 0)),
        endpoint=data.get("endpoint"),
        timeout_ms=int(data.get("timeout_ms", 30000)),
    )


_TOP_LEVEL_KEYS = {
    "dataset": None,
    "output_dir": None,
    "strategy": None,
    "split_seed": None,
    "split_ratios": None,
    "run_seed": None,
    "k_values": None,
    "gate_threshold": None,
    "max_attempts": None,
    "backend": None,
    "params": None,
    "embedder": None,
    "parallelism": None,
    "templates": None,
}


def config_from_dict(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed config document.

    Relative paths resolve against ``base_dir`` (the config file's
    directory) when given.
    """
    data = _take(raw, _TOP_LEVEL_KEYS, "config")
    if "dataset" not in data:
        raise ConfigError("config key 'dataset' is required")
    if "output_dir" not in data:
        raise ConfigError("config key 'output_dir' is required")

    def _path(value: str) -> Path:
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return path

    ratios = data.get("split_ratios", (0.6, 0.2, 0.2))
    if len(ratios) != 3:
        raise ConfigError(f"split_ratios must have three entries, got {ratios}")
    config = ExperimentConfig(
        dataset_path=_path(str(data["dataset"])),
        output_dir=_path(str(data["output_dir"])),
        strategy=_strategy_from_dict(data.get("strategy", {"kind": "baseline"})),
        split_seed=int(data.get("split_seed", 0)),
        split_ratios=tuple(float(r) for r in ratios),
        run_seed=int(data.get("run_seed", 0)),
        k_values=(
            None if data.get("k_values") is None else [int(k) for k in data["k_values"]]
        ),
        gate_threshold=float(data.get("gate_threshold", DEFAULT_GATE_THRESHOLD)),
        max_attempts=int(data.get("max_attempts", DEFAULT_MAX_ATTEMPTS)),
        backend=_backend_from_dict(data.get("backend", {})),
        params=_params_from_dict(data.get("params", {})),
        embedder=(
            None if data.get("embedder") is None else _embedder_from_dict(data["embedder"])
        ),
        parallelism=int(data.get("parallelism", 1)),
        templates_path=(None if data.get("templates") is None else _path(str(data["templates"]))),
    )
    config.validate()
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse a YAML config file into an ExperimentConfig."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(raw, base_dir=path.parent)


def build_backend(spec: BackendSpec):
    """Construct the generator instance a config asks for."""
    if spec.type == "stub-echo":
        return StubBackend(mode="echo")
    if spec.type == "stub-script":
        if not spec.script:
            raise ConfigError("backend type 'stub-script' needs a non-empty script")
        return StubBackend(script=spec.script, mode="scripted")
    if not spec.endpoint:
        raise ConfigError("backend type 'http' needs an endpoint")
    api_key = os.environ.get(spec.api_key_env)
    if api_key is None:
        raise ConfigError(
            f"environment variable {spec.api_key_env!r} is not set (required for the http backend)"
        )
    try:
        return HttpChatBackend(spec.endpoint, api_key=api_key, timeout_ms=spec.timeout_ms)
    except BackendConfigError as exc:
        raise ConfigError(str(exc)) from exc


def build_embedder(spec: EmbedderSpec) -> TokenEmbedder:
    if spec.type == "hash":
        return HashedGaussianEmbedder(dim=spec.dim, seed=spec.seed)
    if spec.type == "one-hot":
        return OneHotEmbedder(dim=spec.dim)
    if not spec.endpoint:
        raise ConfigError("embedder type 'http' needs an endpoint")
    return HttpEmbedder(spec.endpoint, timeout_ms=spec.timeout_ms)


# ---------------------------------------------------------------------------
# Run loop


def _question_seed(run_seed: int, question_id: str) -> int:
    return zlib.crc32(f"{run_seed}:{question_id}".encode("utf-8")) & 0x7FFFFFFF


def run_question(
    question: QuestionRecord,
    strategy: PromptStrategy,
    pool: Sequence[QuestionRecord],
    generator,
    idf: IdfModel,
    config: ExperimentConfig,
    *,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    embedder: Optional[TokenEmbedder] = None,
    selection_idf: Optional[IdfModel] = None,
) -> QuestionOutcome:
    """Generate, gate, and score one question.

    Each backend call appends one attempt. A response passes the gate when
    its TF-IDF cosine to the reference text reaches the threshold; the
    first passing response is scored and kept. Retryable backend errors
    consume attempts; a non-retryable error stops early. Exhaustion means
    the outcome is discarded (no final text, no metrics).
    """
    exemplars = (
        select_exemplars(question, pool, strategy.k, seed=config.run_seed, idf=selection_idf)
        if strategy.uses_k
        else []
    )
    prompt = render(question, strategy, exemplars, templates)
    reference = question.reference_text()
    ref_vec = metrics.vectorize(idf, metrics.tokenize(reference))
    params = config.params
    if params.seed is None:
        params = replace(params, seed=_question_seed(config.run_seed, question.id))

    attempts: list[Attempt] = []
    final_text: Optional[str] = None
    report: Optional[metrics.MetricReport] = None
    for _ in range(config.max_attempts):
        try:
            result = generator.generate(prompt.text, params)
        except BackendError as exc:
            attempts.append(Attempt(text=None, gate_similarity=None, error=str(exc)))
            if not exc.retryable:
                break
            continue
        similarity = metrics.cosine_similarity(
            metrics.vectorize(idf, metrics.tokenize(result.text)), ref_vec
        )
        attempts.append(Attempt(text=result.text, gate_similarity=similarity))
        if similarity >= config.gate_threshold:
            final_text = result.text
            report = metrics.score_pair(result.text, reference, idf, embedder)
            break
    return QuestionOutcome(
        question_id=question.id,
        prompt=prompt,
        attempts=attempts,
        final_text=final_text,
        discarded=final_text is None,
        metrics=report,
    )


def prepare_split(config: ExperimentConfig) -> DatasetSplit:
    records = parse_dataset(config.dataset_path)
    if not records:
        raise ConfigError(f"dataset {config.dataset_path} is empty")
    return split(records, config.split_ratios, config.split_seed)


def run_experiment(
    config: ExperimentConfig,
    generator=None,
    embedder: Optional[TokenEmbedder] = None,
    write: bool = True,
) -> ExperimentReport:
    """Evaluate every test-split question against the train-split pool.

    Up to ``config.parallelism`` questions run concurrently; the report is
    ordered by question id either way and, with a stub backend and fixed
    seeds, byte-identical across parallelism settings.
    """
    config.validate()
    ds_split = prepare_split(config)
    if not ds_split.test:
        raise ConfigError("test split is empty; nothing to evaluate")
    pool = ds_split.train
    if config.strategy.uses_k and config.strategy.k > len(pool):
        raise ConfigError(
            f"strategy needs k={config.strategy.k} exemplars but the train split has {len(pool)}"
        )
    templates = (
        PromptTemplates.from_file(config.templates_path)
        if config.templates_path is not None
        else DEFAULT_TEMPLATES
    )
    if generator is None:
        generator = build_backend(config.backend)
    if embedder is None and config.embedder is not None:
        embedder = build_embedder(config.embedder)

    idf = metrics.fit_idf(
        [metrics.tokenize(record.reference_text()) for record in ds_split.test]
    )
    selection_idf = (
        metrics.fit_idf([metrics.tokenize(record.question) for record in pool])
        if config.strategy.uses_k
        else None
    )
    targets = sorted(ds_split.test, key=lambda record: record.id)

    def worker(question: QuestionRecord) -> QuestionOutcome:
        return run_question(
            question,
            config.strategy,
            pool,
            generator,
            idf,
            config,
            templates=templates,
            embedder=embedder,
            selection_idf=selection_idf,
        )

    if config.parallelism == 1:
        outcomes = [worker(question) for question in targets]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as executor:
            outcomes = list(executor.map(worker, targets))

    report = ExperimentReport.build(config.echo(), outcomes)
    if write:
        emit_report(report, config.output_dir)
    return report


def run_ksweep(
    config: ExperimentConfig,
    generator=None,
    embedder: Optional[TokenEmbedder] = None,
    write: bool = True,
) -> list[tuple[int, ExperimentReport]]:
    """Run one experiment per K with identical splits and seeds.

    Emits a per-K aggregate table alongside the per-K report directories.
    """
    config.validate()
    if not config.k_values:
        raise ConfigError("k_values must be set for a sweep")
    strategies = []
    for k in config.k_values:
        try:
            strategies.append((k, config.strategy.with_k(k)))
        except PromptError as exc:
            raise ConfigError(f"k={k}: {exc}") from exc
    if generator is None:
        generator = build_backend(config.backend)
    results = []
    for k, strategy in strategies:
        sub = replace(
            config,
            strategy=strategy,
            k_values=None,
            output_dir=Path(config.output_dir) / f"k={k}",
        )
        results.append((k, run_experiment(sub, generator=generator, embedder=embedder, write=write)))
    if write:
        emit_sweep(results, config.output_dir)
    return results
