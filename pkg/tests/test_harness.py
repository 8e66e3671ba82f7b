"""Harness behavior: config handling, the regeneration gate, full runs,
sweeps, label import, and report round-trips."""

from __future__ import annotations

import json
import pytest

from stemstep_eval.backends import BackendError, SequenceBackend, StubBackend
from stemstep_eval.data import sample_path
from stemstep_eval.dataset import QuestionRecord, serialize_dataset
from stemstep_eval.harness import (
    BackendSpec,
    ConfigError,
    ExperimentConfig,
    build_backend,
    config_from_dict,
    load_config,
    prepare_split,
    run_experiment,
    run_ksweep,
    run_question,
)
from stemstep_eval.metrics import fit_idf, tokenize
from stemstep_eval.prompts import PromptStrategy
from stemstep_eval.reports import (
    ExperimentReport,
    LabelError,
    compute_aggregates,
    emit_report,
    import_human_labels,
    metric_values,
    per_question_rows,
)

REFERENCE_ANSWER = "the resultant height is twenty meters exactly"
OFF_TOPIC = "zebra quagga okapi wildebeest pangolin"  # no vocabulary overlap


def _question(record_id="q1", question="how high does the ball go"):
    return QuestionRecord(
        id=record_id,
        subject="physics",
        question=question,
        steps=["apply the kinematic equation", "solve for the height"],
        final_answer=REFERENCE_ANSWER,
    )


def _gate_idf(records):
    return fit_idf([tokenize(record.reference_text()) for record in records])


def _config(tmp_path, **kwargs):
    defaults = dict(
        dataset_path=sample_path(),
        output_dir=tmp_path / "out",
        split_seed=7,
        run_seed=7,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class FailingBackend:
    """Raises a scripted error sequence, then succeeds with a fixed reply."""

    def __init__(self, errors, reply):
        self.errors = list(errors)
        self.reply = reply
        self.backend_id = "failing"
        self.calls = 0

    def generate(self, prompt, params):
        self.calls += 1
        if self.errors:
            retryable = self.errors.pop(0)
            raise BackendError("scripted failure", self.backend_id, retryable=retryable)
        from stemstep_eval.backends import GenerationResult

        return GenerationResult(text=self.reply, latency_ms=0, backend_id=self.backend_id)


# ---------------------------------------------------------------------------
# config


def test_load_config_resolves_paths_and_fields(tmp_path):
    config_path = tmp_path / "experiment.yaml"
    config_path.write_text(
        """
dataset: data.stemstep
output_dir: results
split_seed: 3
run_seed: 9
gate_threshold: 0.25
max_attempts: 2
parallelism: 4
strategy:
  kind: kshot
  k: 2
backend:
  type: stub-echo
params:
  temperature: 0.1
  model_name: test-model
""",
        encoding="utf-8",
    )
    config = load_config(config_path)
    assert config.dataset_path == tmp_path / "data.stemstep"
    assert config.output_dir == tmp_path / "results"
    assert config.strategy == PromptStrategy(kind="kshot_cot", k=2)
    assert config.gate_threshold == 0.25
    assert config.max_attempts == 2
    assert config.parallelism == 4
    assert config.params.temperature == 0.1
    assert config.params.model_name == "test-model"


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"dataset": "d", "output_dir": "o", "mystery": 1})
    assert "mystery" in str(err.value)
    with pytest.raises(ConfigError):
        config_from_dict({"dataset": "d", "output_dir": "o", "backend": {"nope": 1}})


def test_config_requires_dataset_and_output():
    with pytest.raises(ConfigError):
        config_from_dict({"output_dir": "o"})
    with pytest.raises(ConfigError):
        config_from_dict({"dataset": "d"})


def test_config_validates_gate_and_attempts(tmp_path):
    with pytest.raises(ConfigError):
        _config(tmp_path, gate_threshold=1.5).validate()
    with pytest.raises(ConfigError):
        _config(tmp_path, max_attempts=0).validate()
    with pytest.raises(ConfigError):
        _config(tmp_path, parallelism=0).validate()


def test_config_k_values_need_k_strategy(tmp_path):
    config = _config(tmp_path, k_values=[1, 3])
    with pytest.raises(ConfigError):
        config.validate()
    config = _config(
        tmp_path, strategy=PromptStrategy(kind="kshot_cot", k=1), k_values=[1, 3]
    )
    config.validate()


def test_strategy_alias_resolution():
    config = config_from_dict(
        {"dataset": "d", "output_dir": "o", "strategy": {"kind": "analogical-cot", "k": 3}}
    )
    assert config.strategy.kind == "analogical_cot"
    assert config.strategy.self_examples == 3


def test_build_backend_variants(monkeypatch):
    assert build_backend(BackendSpec(type="stub-echo")).mode == "echo"
    scripted = build_backend(BackendSpec(type="stub-script", script=[("a", "b")]))
    assert scripted.script == [("a", "b")]
    with pytest.raises(ConfigError):
        build_backend(BackendSpec(type="stub-script"))

    monkeypatch.delenv("TEST_API_KEY", raising=False)
    spec = BackendSpec(type="http", endpoint="http://127.0.0.1:9/v1", api_key_env="TEST_API_KEY")
    with pytest.raises(ConfigError) as err:
        build_backend(spec)
    assert "TEST_API_KEY" in str(err.value)

    monkeypatch.setenv("TEST_API_KEY", "k")
    backend = build_backend(spec)
    assert backend.backend_id.startswith("http:")

    with pytest.raises(ConfigError):
        build_backend(BackendSpec(type="http", endpoint=None))


# ---------------------------------------------------------------------------
# run_question / gate


def test_run_question_accepts_reference_verbatim(tmp_path):
    question = _question()
    backend = StubBackend(script=[("ball", question.reference_text())])
    config = _config(tmp_path)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert len(outcome.attempts) == 1
    assert outcome.attempts[0].gate_similarity == pytest.approx(1.0, abs=1e-9)
    assert not outcome.discarded
    assert outcome.final_text == question.reference_text()
    assert outcome.metrics is not None
    assert outcome.metrics.rouge1.f1 == pytest.approx(1.0)


def test_gate_regenerates_then_passes(tmp_path):
    question = _question()
    backend = SequenceBackend([OFF_TOPIC, OFF_TOPIC, question.final_answer])
    config = _config(tmp_path, gate_threshold=0.3, max_attempts=3)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert len(backend.calls) == 3
    assert len(outcome.attempts) == 3
    assert outcome.attempts[0].gate_similarity == 0.0
    assert outcome.attempts[1].gate_similarity == 0.0
    assert outcome.attempts[2].gate_similarity >= 0.3
    assert not outcome.discarded


def test_gate_discards_after_exhaustion(tmp_path):
    question = _question()
    backend = SequenceBackend([OFF_TOPIC, OFF_TOPIC, question.final_answer])
    config = _config(tmp_path, gate_threshold=0.3, max_attempts=2)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert len(backend.calls) == 2
    assert len(outcome.attempts) == 2
    assert outcome.discarded
    assert outcome.final_text is None
    assert outcome.metrics is None


def test_retryable_errors_consume_attempts(tmp_path):
    question = _question()
    backend = FailingBackend([True, True], question.reference_text())
    config = _config(tmp_path, max_attempts=3)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert backend.calls == 3
    assert len(outcome.attempts) == 3
    assert outcome.attempts[0].error == "scripted failure"
    assert outcome.attempts[0].text is None
    assert not outcome.discarded


def test_non_retryable_error_stops_early(tmp_path):
    question = _question()
    backend = FailingBackend([False], question.reference_text())
    config = _config(tmp_path, max_attempts=3)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert backend.calls == 1
    assert len(outcome.attempts) == 1
    assert outcome.discarded
    assert outcome.attempts[0].error is not None


# ---------------------------------------------------------------------------
# run_experiment


def _ten_record_file(tmp_path):
    records = [
        QuestionRecord(
            id=f"r{i}",
            subject="physics",
            question=f"question about topic {i} with distinct words {i * 11}",
            steps=[f"first step {i}", f"second step {i}"],
            final_answer=f"answer number {i}",
        )
        for i in range(10)
    ]
    path = tmp_path / "ten.stemstep"
    serialize_dataset(records, path)
    return path


def test_run_experiment_split_arithmetic(tmp_path):
    config = _config(tmp_path, dataset_path=_ten_record_file(tmp_path))
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    assert len(report.per_question) == 2  # 60/20/20 of 10
    ids = [outcome.question_id for outcome in report.per_question]
    assert ids == sorted(ids)


def test_run_experiment_gate_zero_threshold(tmp_path):
    config = _config(tmp_path, dataset_path=_ten_record_file(tmp_path), gate_threshold=0.0)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    assert report.discard_rate == 0.0
    assert report.scored_count == len(report.per_question)
    assert report.aggregates  # populated once anything scores


def test_run_experiment_deterministic_across_parallelism(tmp_path):
    config_a = _config(tmp_path, output_dir=tmp_path / "a", parallelism=1)
    config_b = _config(tmp_path, output_dir=tmp_path / "b", parallelism=8)
    run_experiment(config_a, generator=StubBackend(mode="echo"))
    run_experiment(config_b, generator=StubBackend(mode="echo"))
    bytes_a = (tmp_path / "a" / "report.json").read_bytes()
    bytes_b = (tmp_path / "b" / "report.json").read_bytes()
    assert bytes_a == bytes_b


def test_run_experiment_attempt_accounting(tmp_path):
    backend = StubBackend(mode="echo")
    config = _config(tmp_path, gate_threshold=0.9, max_attempts=3)
    report = run_experiment(config, generator=backend)
    total_attempts = sum(len(outcome.attempts) for outcome in report.per_question)
    assert total_attempts == len(backend.calls)
    # echo never reaches 0.9 similarity: every question exhausts its budget
    assert all(len(outcome.attempts) == 3 for outcome in report.per_question)
    assert report.discard_rate == 1.0


def test_run_experiment_outcome_invariants(tmp_path):
    config = _config(tmp_path, gate_threshold=0.2, max_attempts=2)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    for outcome in report.per_question:
        assert outcome.discarded == (outcome.final_text is None) == (outcome.metrics is None)
        assert len(outcome.attempts) <= config.max_attempts
        if not outcome.discarded:
            assert outcome.accepted_similarity >= config.gate_threshold


def test_run_experiment_no_exemplar_leakage(tmp_path):
    config = _config(
        tmp_path, strategy=PromptStrategy(kind="kshot_cot", k=3), gate_threshold=0.0
    )
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    test_ids = {record.id for record in prepare_split(config).test}
    by_id = {record.id: record for record in prepare_split(config).test}
    for outcome in report.per_question:
        assert not (set(outcome.prompt.exemplar_ids) & test_ids)
        target = by_id[outcome.question_id]
        assert target.final_answer not in outcome.prompt.text
        for step in target.steps:
            assert step not in outcome.prompt.text


def test_run_experiment_k_exceeding_pool(tmp_path):
    config = _config(
        tmp_path,
        dataset_path=_ten_record_file(tmp_path),
        strategy=PromptStrategy(kind="kshot_cot", k=7),  # train split holds 6
    )
    with pytest.raises(ConfigError):
        run_experiment(config, generator=StubBackend(mode="echo"))


def test_run_experiment_with_embedder(tmp_path):
    from stemstep_eval.harness import EmbedderSpec

    config = _config(tmp_path, gate_threshold=0.0, embedder=EmbedderSpec(type="hash", dim=16))
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    scored = [o for o in report.per_question if not o.discarded]
    assert scored and all(o.metrics.embed_f1 is not None for o in scored)
    assert "embed_f1" in report.aggregates


# ---------------------------------------------------------------------------
# sweeps


def test_ksweep_shares_split_membership(tmp_path):
    config = _config(
        tmp_path,
        strategy=PromptStrategy(kind="kshot_cot", k=1),
        k_values=[1, 2, 3, 4],
        gate_threshold=0.0,
    )
    results = run_ksweep(config, generator=StubBackend(mode="echo"))
    assert [k for k, _ in results] == [1, 2, 3, 4]
    memberships = [
        tuple(outcome.question_id for outcome in report.per_question) for _, report in results
    ]
    assert len(set(memberships)) == 1
    assert (tmp_path / "out" / "sweep.csv").exists()
    assert (tmp_path / "out" / "k=3" / "report.json").exists()


def test_ksweep_rejects_k_zero_for_kshot(tmp_path):
    config = _config(
        tmp_path, strategy=PromptStrategy(kind="kshot_cot", k=1), k_values=[0]
    )
    with pytest.raises(ConfigError):
        run_ksweep(config, generator=StubBackend(mode="echo"))


def test_ksweep_requires_k_values(tmp_path):
    config = _config(tmp_path, strategy=PromptStrategy(kind="kshot_cot", k=1))
    with pytest.raises(ConfigError):
        run_ksweep(config, generator=StubBackend(mode="echo"))


def test_ksweep_scripted_quality_orders_aggregates(tmp_path):
    # reply quality rises with K: the K=3 prompt contains "3. ", K>=2 "2. ", etc.
    records = prepare_split(_config(tmp_path)).test
    all_references = " ".join(record.reference_text() for record in records)
    half = " ".join(all_references.split()[: len(all_references.split()) // 4])
    script = [
        ("3. ", all_references),
        ("2. ", half),
        ("1. ", "entirely unrelated reply text"),
    ]
    config = _config(
        tmp_path,
        strategy=PromptStrategy(kind="kshot_cot", k=1),
        k_values=[1, 2, 3],
        gate_threshold=0.0,
    )
    results = run_ksweep(config, generator=StubBackend(script=script))
    means = [report.aggregates["rouge1_recall"]["mean"] for _, report in results]
    assert means[0] < means[1] < means[2]


# ---------------------------------------------------------------------------
# labels


def _labeled_report(tmp_path, n=4):
    config = _config(tmp_path, dataset_path=_ten_record_file(tmp_path), gate_threshold=0.0)
    return run_experiment(config, generator=StubBackend(mode="echo"))


def test_labels_all_true(tmp_path):
    report = _labeled_report(tmp_path)
    lines = [f"{outcome.question_id},true" for outcome in report.per_question]
    import_human_labels(report, lines)
    assert report.accuracy == 1.0


def test_labels_fraction(tmp_path):
    report = _labeled_report(tmp_path)
    ids = [outcome.question_id for outcome in report.per_question]
    lines = [f"{ids[0]},true", f"{ids[1]},false"]
    import_human_labels(report, lines)
    assert report.accuracy == 0.5
    labeled = [o for o in report.per_question if o.human_label is not None]
    assert len(labeled) == 2


def test_labels_unknown_id(tmp_path):
    report = _labeled_report(tmp_path)
    with pytest.raises(LabelError) as err:
        import_human_labels(report, ["ghost,true"])
    assert "ghost" in str(err.value)


def test_labels_duplicate_and_malformed(tmp_path):
    report = _labeled_report(tmp_path)
    some_id = report.per_question[0].question_id
    with pytest.raises(LabelError):
        import_human_labels(report, [f"{some_id},true", f"{some_id},false"])
    with pytest.raises(LabelError):
        import_human_labels(report, [f"{some_id},maybe"])
    with pytest.raises(LabelError):
        import_human_labels(report, ["justonefield"])


# ---------------------------------------------------------------------------
# report round-trip


def test_report_round_trip_reproduces_aggregates(tmp_path):
    config = _config(tmp_path, gate_threshold=0.0)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    loaded = ExperimentReport.load(tmp_path / "out" / "report.json")
    assert loaded.aggregates == report.aggregates
    assert loaded.discard_rate == report.discard_rate
    assert compute_aggregates(loaded.per_question) == report.aggregates


def test_aggregates_match_recomputation_within_tolerance(tmp_path):
    config = _config(tmp_path, gate_threshold=0.0)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    scored = [o for o in report.per_question if not o.discarded]
    for name, stats in report.aggregates.items():
        values = [metric_values(o.metrics)[name] for o in scored]
        assert stats["mean"] == pytest.approx(sum(values) / len(values), abs=1e-9)


def test_tabular_outputs_reflect_discards(tmp_path):
    config = _config(tmp_path, gate_threshold=0.9, max_attempts=2)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    rows = per_question_rows(report)
    assert all(row["discarded"] == "true" for row in rows)
    csv_path = tmp_path / "out" / "report.csv"
    assert csv_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert "question_id" in header and "gate_similarity" in header

    agg_path = tmp_path / "out" / "aggregates.csv"
    agg_lines = agg_path.read_text().splitlines()
    assert "discard_rate" in agg_lines[0]


def test_emit_report_structured_only(tmp_path):
    report = _labeled_report(tmp_path)
    paths = emit_report(report, tmp_path / "solo", formats=("structured",))
    assert [path.name for path in paths] == ["report.json"]
    data = json.loads(paths[0].read_text())
    assert data["config"]["strategy"]["kind"] == "baseline_zero_shot"


# ---------------------------------------------------------------------------
# integration odds and ends


def test_run_experiment_through_http_backend(tmp_path, monkeypatch, mock_server):
    monkeypatch.setenv("STEMSTEP_EVAL_API_KEY", "test-key")
    mock_server.reply_text = "a fixed completion about heights and masses"
    config = _config(
        tmp_path,
        gate_threshold=0.0,
        backend=BackendSpec(type="http", endpoint=mock_server.url("/chat")),
    )
    report = run_experiment(config)
    assert report.discard_rate == 0.0
    assert all(o.final_text == mock_server.reply_text for o in report.per_question)
    sent = mock_server.requests[-1]
    assert sent["headers"]["Authorization"] == "Bearer test-key"
    assert "seed" in sent["body"]  # per-question derived seed


def test_empty_generation_is_valid_data(tmp_path):
    question = _question()
    backend = SequenceBackend([""])
    config = _config(tmp_path, gate_threshold=0.0)
    outcome = run_question(
        question, PromptStrategy(kind="baseline_zero_shot"), [], backend, _gate_idf([question]), config
    )
    assert not outcome.discarded
    assert outcome.final_text == ""
    assert outcome.attempts[0].gate_similarity == 0.0
    assert outcome.metrics.rouge1.f1 == 0.0


def test_templates_path_flows_through_config(tmp_path):
    templates = tmp_path / "templates.txt"
    templates.write_text("[baseline]\nCUSTOM PREFIX {question}\n", encoding="utf-8")
    config = _config(tmp_path, gate_threshold=0.0, templates_path=templates)
    report = run_experiment(config, generator=StubBackend(mode="echo"))
    assert all(o.prompt.text.startswith("CUSTOM PREFIX ") for o in report.per_question)
