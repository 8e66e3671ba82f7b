"""Command-line driver: dataset tooling, experiment runs, K sweeps,
offline scoring, and report rendering.

Exit codes: 0 success, 1 validation/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from .backends import BackendConfigError
from .dataset import (
    STEP_LENGTH_BUCKET,
    DatasetError,
    compute_stats,
    deduplicate,
    parse_dataset,
    serialize_dataset,
    split,
)
from .harness import (
    BackendSpec,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    resolve_strategy_kind,
    run_experiment,
    run_ksweep,
)
from .metrics import fit_idf, score_pair, tokenize
from .prompts import PromptError, PromptStrategy
from .reports import (
    ExperimentReport,
    LabelError,
    emit_report,
    emit_scores,
    import_human_labels,
)

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _existing(path: str, what: str) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise ConfigError(f"{what} file not found: {resolved}")
    return resolved


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated ratios, got {text!r}")
    try:
        return tuple(float(part) for part in parts)
    except ValueError as exc:
        raise ConfigError(f"bad ratio in {text!r}: {exc}") from exc


def _parse_text_records(path: Path) -> dict[str, str]:
    """JSONL of {id, text} pairs used by the offline scorer."""
    records: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: line {number}: invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict) or "id" not in raw or "text" not in raw:
                raise ConfigError(f"{path}: line {number}: expected an object with id and text")
            record_id = str(raw["id"])
            if record_id in records:
                raise ConfigError(f"{path}: line {number}: duplicate id {record_id!r}")
            records[record_id] = str(raw["text"])
    return records


# ---------------------------------------------------------------------------
# Commands


def cmd_stats(args) -> int:
    records = parse_dataset(_existing(args.dataset, "dataset"))
    stats = compute_stats(records)
    print(f"records                {stats.record_count}")
    print(f"mean steps/question    {stats.mean_steps_per_question:.4f}")
    print(f"mean step length       {stats.mean_step_length_chars:.2f} chars")
    print()
    print("steps per question:")
    for count, freq in stats.step_count_histogram.items():
        print(f"  {count:>6}  {freq}")
    print()
    print(f"step length (chars, buckets of {STEP_LENGTH_BUCKET}):")
    for bucket, freq in stats.step_length_histogram.items():
        print(f"  {bucket:>6}+ {freq}")
    if args.dump:
        lines = ["kind,key,count"]
        lines += [f"steps,{k},{v}" for k, v in stats.step_count_histogram.items()]
        lines += [f"step_length,{k},{v}" for k, v in stats.step_length_histogram.items()]
        Path(args.dump).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"\nhistogram dump written to {args.dump}")
    return 0


def cmd_split(args) -> int:
    records = parse_dataset(_existing(args.dataset, "dataset"))
    result = split(records, _parse_ratios(args.ratios), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (
        ("train", result.train),
        ("validation", result.validation),
        ("test", result.test),
    ):
        path = out / f"{name}.stemstep"
        serialize_dataset(part, path)
        print(f"{name:<11} {len(part):>5}  {path}")
    return 0


def cmd_dedupe(args) -> int:
    records = parse_dataset(_existing(args.dataset, "dataset"))
    kept = deduplicate(records, args.threshold)
    serialize_dataset(kept, Path(args.out))
    print(f"kept {len(kept)} of {len(records)} records ({len(records) - len(kept)} dropped)")
    return 0


# Fresh-strategy defaults when --strategy switches kind without a config.
_STRATEGY_DEFAULTS = {
    "baseline_zero_shot": {"k": 0, "self_examples": 0},
    "kshot_cot": {"k": 3, "self_examples": 0},
    "analogical": {"k": 0, "self_examples": None},
    "analogical_cot": {"k": 3, "self_examples": 3},
}


def _config_from_args(args, need_k_values: bool) -> ExperimentConfig:
    if args.config:
        config = load_config(_existing(args.config, "config"))
    elif args.dataset:
        config = config_from_dict({"dataset": args.dataset, "output_dir": args.out or "out"})
    else:
        raise ConfigError("either --config or --dataset is required")

    overrides = {}
    if args.dataset:
        overrides["dataset_path"] = Path(args.dataset)
    if args.out:
        overrides["output_dir"] = Path(args.out)
    if args.threshold is not None:
        overrides["gate_threshold"] = args.threshold
    if args.max_attempts is not None:
        overrides["max_attempts"] = args.max_attempts
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if args.seed is not None:
        overrides["split_seed"] = args.seed
        overrides["run_seed"] = args.seed
    if args.backend:
        backend = config.backend
        overrides["backend"] = BackendSpec(
            type=args.backend,
            endpoint=args.endpoint or backend.endpoint,
            api_key_env=backend.api_key_env,
            timeout_ms=backend.timeout_ms,
            script=backend.script,
        )
    elif args.endpoint:
        overrides["backend"] = replace(config.backend, endpoint=args.endpoint)

    strategy = config.strategy
    try:
        if args.strategy:
            kind = resolve_strategy_kind(args.strategy)
            if kind != strategy.kind:
                strategy = PromptStrategy(kind=kind, **_STRATEGY_DEFAULTS[kind])
        if need_k_values:
            if args.k:
                overrides["k_values"] = [int(part) for part in str(args.k).split(",")]
        elif args.k is not None:
            strategy = strategy.with_k(int(args.k))
    except (PromptError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    overrides["strategy"] = strategy

    config = replace(config, **overrides)
    config.validate()
    return config


def _summary_line(report: ExperimentReport) -> str:
    strategy = report.config["strategy"]
    rouge = report.aggregates.get("rougeL_f1", {}).get("mean")
    meteor = report.aggregates.get("meteor", {}).get("mean")
    label = strategy["kind"] + (f" k={strategy['k']}" if strategy["k"] else "")
    parts = [
        f"{label}:",
        f"questions={len(report.per_question)}",
        f"scored={report.scored_count}",
        f"discard_rate={report.discard_rate:.3f}",
    ]
    if rouge is not None:
        parts.append(f"rougeL_f1={rouge:.4f}")
    if meteor is not None:
        parts.append(f"meteor={meteor:.4f}")
    if report.accuracy is not None:
        parts.append(f"accuracy={report.accuracy:.3f}")
    return " ".join(parts)


def cmd_run(args) -> int:
    config = _config_from_args(args, need_k_values=False)
    _existing(str(config.dataset_path), "dataset")
    report = run_experiment(config)
    print(_summary_line(report))
    print(f"report written to {Path(config.output_dir) / 'report.json'}")
    return 0


def cmd_sweep(args) -> int:
    config = _config_from_args(args, need_k_values=True)
    _existing(str(config.dataset_path), "dataset")
    if not config.k_values:
        raise ConfigError("sweep needs --k K1,K2,... or k_values in the config")
    results = run_ksweep(config)
    for _, report in results:
        print(_summary_line(report))
    print(f"sweep table written to {Path(config.output_dir) / 'sweep.csv'}")
    return 0


def cmd_score(args) -> int:
    candidates = _parse_text_records(_existing(args.candidates, "candidates"))
    references = _parse_text_records(_existing(args.references, "references"))
    missing_refs = sorted(set(candidates) - set(references))
    missing_cands = sorted(set(references) - set(candidates))
    if missing_refs or missing_cands:
        details = []
        if missing_refs:
            details.append(f"ids without references: {', '.join(missing_refs)}")
        if missing_cands:
            details.append(f"ids without candidates: {', '.join(missing_cands)}")
        raise ConfigError("candidate/reference ids do not align; " + "; ".join(details))
    idf = fit_idf([tokenize(text) for text in references.values()])
    scored = [
        (pair_id, score_pair(candidates[pair_id], references[pair_id], idf))
        for pair_id in sorted(candidates)
    ]
    paths = emit_scores(scored, args.out)
    print(f"scored {len(scored)} pairs; wrote {', '.join(str(p) for p in paths)}")
    return 0


def cmd_report(args) -> int:
    report = ExperimentReport.load(_existing(args.input, "report"))
    if args.labels:
        import_human_labels(report, _existing(args.labels, "labels"))
    formats = ("structured", "tabular") if args.format == "both" else (args.format,)
    paths = emit_report(report, args.out, formats=formats)
    print(_summary_line(report))
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_run_flags(parser: _Parser) -> None:
    parser.add_argument("--config", help="YAML experiment config")
    parser.add_argument("--dataset", help="dataset file (overrides config)")
    parser.add_argument(
        "--strategy",
        choices=["baseline", "kshot", "analogical", "analogical-cot"],
        help="prompt strategy (overrides config)",
    )
    parser.add_argument("--k", help="exemplar count; comma-separated list for sweep")
    parser.add_argument("--threshold", type=float, help="regeneration gate threshold")
    parser.add_argument("--max-attempts", dest="max_attempts", type=int, help="gate retry budget")
    parser.add_argument(
        "--backend", choices=["http", "stub-echo", "stub-script"], help="generation backend"
    )
    parser.add_argument("--endpoint", help="chat-completions URL for the http backend")
    parser.add_argument("--parallelism", type=int, help="questions in flight at once")
    parser.add_argument("--seed", type=int, help="sets both split_seed and run_seed")
    parser.add_argument("--out", help="output directory (default: out, or the config value)")


def build_parser() -> _Parser:
    parser = _Parser(prog="stemstep-eval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    stats = commands.add_parser("stats", help="dataset summary statistics")
    stats.add_argument("--dataset", required=True)
    stats.add_argument("--dump", help="also write histograms as CSV for plotting")
    stats.set_defaults(func=cmd_stats)

    split_cmd = commands.add_parser("split", help="seeded train/validation/test split")
    split_cmd.add_argument("--dataset", required=True)
    split_cmd.add_argument("--ratios", default="0.6,0.2,0.2")
    split_cmd.add_argument("--seed", type=int, default=0)
    split_cmd.add_argument("--out", default="splits")
    split_cmd.set_defaults(func=cmd_split)

    dedupe_cmd = commands.add_parser("dedupe", help="drop near-duplicate questions")
    dedupe_cmd.add_argument("--dataset", required=True)
    dedupe_cmd.add_argument("--threshold", type=float, default=0.9)
    dedupe_cmd.add_argument("--out", required=True)
    dedupe_cmd.set_defaults(func=cmd_dedupe)

    run = commands.add_parser("run", help="run one experiment")
    _add_run_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = commands.add_parser("sweep", help="run a K sweep")
    _add_run_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    score = commands.add_parser("score", help="score candidate/reference pairs offline")
    score.add_argument("--candidates", required=True, help="JSONL of {id, text}")
    score.add_argument("--references", required=True, help="JSONL of {id, text}")
    score.add_argument("--out", default="out")
    score.set_defaults(func=cmd_score)

    report = commands.add_parser("report", help="re-render or label a saved report")
    report.add_argument("--in", dest="input", required=True, help="report.json path")
    report.add_argument("--labels", help="two-column id,true|false label file")
    report.add_argument(
        "--format", choices=["structured", "tabular", "both"], default="both"
    )
    report.add_argument("--out", default="out")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, PromptError, LabelError, BackendConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
