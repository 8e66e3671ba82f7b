"""Prompt-engineering evaluation harness for step-annotated STEM QA.

Builds baseline / K-shot / analogical / analogical-CoT prompts over
StemStep-format datasets, generates answers through a pluggable backend,
regenerates low-similarity responses, and scores outputs with ROUGE,
METEOR, TF-IDF cosine, and a greedy embedding match.
"""

__version__ = "0.1.0"

from .backends import GenerationParams, GenerationResult, HttpChatBackend, StubBackend
from .dataset import (
    DatasetSplit,
    DatasetStats,
    QuestionRecord,
    compute_stats,
    deduplicate,
    normalize_text,
    parse_dataset,
    serialize_dataset,
    split,
)
from .harness import ExperimentConfig, load_config, run_experiment, run_ksweep, run_question
from .metrics import (
    MetricReport,
    cosine_similarity,
    embed_score,
    fit_idf,
    lcs_length,
    meteor,
    rouge_l,
    rouge_n,
    score_pair,
    tokenize,
    vectorize,
)
from .prompts import (
    PromptStrategy,
    RenderedPrompt,
    render_analogical,
    render_analogical_cot,
    render_baseline,
    render_kshot_cot,
    select_exemplars,
)
from .reports import ExperimentReport, QuestionOutcome, emit_report, import_human_labels

__all__ = [
    "__version__",
    "GenerationParams",
    "GenerationResult",
    "HttpChatBackend",
    "StubBackend",
    "DatasetSplit",
    "DatasetStats",
    "QuestionRecord",
    "compute_stats",
    "deduplicate",
    "normalize_text",
    "parse_dataset",
    "serialize_dataset",
    "split",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "run_ksweep",
    "run_question",
    "MetricReport",
    "cosine_similarity",
    "embed_score",
    "fit_idf",
    "lcs_length",
    "meteor",
    "rouge_l",
    "rouge_n",
    "score_pair",
    "tokenize",
    "vectorize",
    "PromptStrategy",
    "RenderedPrompt",
    "render_analogical",
    "render_analogical_cot",
    "render_baseline",
    "render_kshot_cot",
    "select_exemplars",
    "ExperimentReport",
    "QuestionOutcome",
    "emit_report",
    "import_human_labels",
]
