"""Prompt strategies: baseline zero-shot, K-shot with worked steps,
analogical, and the K-shot + analogical hybrid.

Rendering is a pure function of (target, exemplars, strategy); repeated
calls are byte-identical. Exemplar selection ranks a pool by TF-IDF
cosine against the target question.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import metrics
from .dataset import QuestionRecord

BASELINE = "baseline_zero_shot"
KSHOT_COT = "kshot_cot"
ANALOGICAL = "analogical"
ANALOGICAL_COT = "analogical_cot"
STRATEGY_KINDS = (BASELINE, KSHOT_COT, ANALOGICAL, ANALOGICAL_COT)

DEFAULT_SELF_EXAMPLES = 3


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptStrategy:
    """Which prompt to build and how many exemplars it carries.

    ``k`` counts dataset exemplars embedded in the prompt. ``self_examples``
    counts exemplars the model is asked to produce itself; ``None`` means
    the analogical wording leaves the amount unstated.
    """

    kind: str
    k: int = 0
    self_examples: Optional[int] = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise PromptError(f"unknown strategy kind {self.kind!r}")
        if self.kind == BASELINE and (self.k != 0 or self.self_examples != 0):
            raise PromptError("baseline takes no exemplars")
        if self.kind == KSHOT_COT and (self.k < 1 or self.self_examples != 0):
            raise PromptError("kshot_cot needs k >= 1 and no self-examples")
        if self.kind == ANALOGICAL:
            if self.k != 0:
                raise PromptError("analogical embeds no dataset exemplars")
            if self.self_examples == 0:  # unstated amount
                object.__setattr__(self, "self_examples", None)
            elif self.self_examples is not None and self.self_examples < 1:
                raise PromptError("analogical self_examples must be None or >= 1")
        if self.kind == ANALOGICAL_COT:
            if self.k < 1:
                raise PromptError("analogical_cot needs k >= 1")
            if self.self_examples == 0 or self.self_examples is None:
                object.__setattr__(self, "self_examples", DEFAULT_SELF_EXAMPLES)
            elif self.self_examples < 1:
                raise PromptError("analogical_cot needs self_examples >= 1")

    @property
    def uses_k(self) -> bool:
        return self.kind in (KSHOT_COT, ANALOGICAL_COT)

    def with_k(self, k: int) -> "PromptStrategy":
        return PromptStrategy(kind=self.kind, k=k, self_examples=self.self_examples)


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    strategy: PromptStrategy
    exemplar_ids: tuple[str, ...]
    target_id: str


@dataclass(frozen=True)
class PromptTemplates:
    """Template constants; overridable from a sectioned plain-text file.

    Placeholders: {question}, {steps}, {final_answer}, {index}.
    """

    baseline: str = "Solve the following question, showing each step of your reasoning.\n\nQuestion: {question}"
    exemplar_block: str = "{index}. {question}\nSteps:\n{steps}\nAnswer: {final_answer}"
    step_line: str = "- {step}"
    kshot_instruction: str = "Now solve, showing your steps:\nQuestion: {question}"
    exemplar_question_line: str = "{index}. {question}"
    recall: str = 'Recall relevant exemplars and solve the question: "{question}"'
    recall_counted: str = 'Recall {count} relevant exemplars and solve the question: "{question}"'

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PromptTemplates":
        """Read overrides from a file of ``[section]`` headers followed by
        template text; unknown sections are rejected."""
        sections: dict[str, list[str]] = {}
        current: Optional[str] = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            header = line.strip()
            if header.startswith("[") and header.endswith("]"):
                current = header[1:-1]
                if current not in cls.__dataclass_fields__:
                    raise PromptError(f"unknown template section {current!r} in {path}")
                sections[current] = []
            elif current is not None:
                sections[current].append(line)
            elif header:
                raise PromptError(f"template text before any [section] header in {path}")
        overrides = {name: "\n".join(lines).strip("\n") for name, lines in sections.items()}
        return cls(**overrides)


DEFAULT_TEMPLATES = PromptTemplates()


def select_exemplars(
    target: QuestionRecord,
    pool: Sequence[QuestionRecord],
    k: int,
    seed: int = 0,
    pool_cap: Optional[int] = None,
    idf: Optional[metrics.IdfModel] = None,
) -> list[QuestionRecord]:
    """Pick the k pool records most similar to the target question.

    Similarity is TF-IDF cosine with idf fitted over the pool's questions
    (pass ``idf`` to reuse a model already fitted on the same pool); ties
    break toward the ascending record id. The target itself is filtered
    from the pool. ``pool_cap`` subsamples oversized pools with the given
    seed before ranking (the only use of randomness here).
    """
    if k < 0:
        raise PromptError(f"k must be >= 0, got {k}")
    candidates = [record for record in pool if record.id != target.id]
    if pool_cap is not None and len(candidates) > pool_cap:
        candidates = random.Random(seed).sample(candidates, pool_cap)
    if k > len(candidates):
        raise PromptError(f"k={k} exceeds available pool of {len(candidates)}")
    if k == 0:
        return []
    docs = [metrics.tokenize(record.question) for record in candidates]
    if idf is None:
        idf = metrics.fit_idf(docs)
    target_vec = metrics.vectorize(idf, metrics.tokenize(target.question))
    scored = [
        (-metrics.cosine_similarity(target_vec, metrics.vectorize(idf, doc)), record.id, record)
        for doc, record in zip(docs, candidates)
    ]
    scored.sort(key=lambda item: (item[0], item[1]))
    return [record for _, _, record in scored[:k]]


def _check_exemplars(target: QuestionRecord, exemplars: Sequence[QuestionRecord]) -> None:
    if not exemplars:
        raise PromptError("exemplar list is empty")
    if any(ex.id == target.id for ex in exemplars):
        raise PromptError(f"target {target.id!r} appears among its own exemplars")


def render_baseline(
    target: QuestionRecord, templates: PromptTemplates = DEFAULT_TEMPLATES
) -> RenderedPrompt:
    """Plain instruction plus the bare question."""
    return RenderedPrompt(
        text=templates.baseline.format(question=target.question),
        strategy=PromptStrategy(kind=BASELINE),
        exemplar_ids=(),
        target_id=target.id,
    )


def render_kshot_cot(
    target: QuestionRecord,
    exemplars: Sequence[QuestionRecord],
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    """Numbered worked exemplars (question, bulleted steps, answer), then
    the target question."""
    _check_exemplars(target, exemplars)
    blocks = []
    for index, exemplar in enumerate(exemplars, start=1):
        steps = "\n".join(templates.step_line.format(step=step) for step in exemplar.steps)
        blocks.append(
            templates.exemplar_block.format(
                index=index,
                question=exemplar.question,
                steps=steps,
                final_answer=exemplar.final_answer,
            )
        )
    blocks.append(templates.kshot_instruction.format(question=target.question))
    return RenderedPrompt(
        text="\n\n".join(blocks),
        strategy=PromptStrategy(kind=KSHOT_COT, k=len(exemplars)),
        exemplar_ids=tuple(ex.id for ex in exemplars),
        target_id=target.id,
    )


def render_analogical(
    target: QuestionRecord,
    self_examples: Optional[int] = None,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    """Ask the model to recall its own exemplars before solving.

    With ``self_examples=None`` the amount is left unstated, which is the
    canonical wording; an integer asks for that many exemplars explicitly.
    """
    if self_examples is None:
        text = templates.recall.format(question=target.question)
    else:
        if self_examples < 1:
            raise PromptError(f"self_examples must be >= 1, got {self_examples}")
        text = templates.recall_counted.format(count=self_examples, question=target.question)
    return RenderedPrompt(
        text=text,
        strategy=PromptStrategy(kind=ANALOGICAL, self_examples=self_examples),
        exemplar_ids=(),
        target_id=target.id,
    )


def render_analogical_cot(
    target: QuestionRecord,
    exemplars: Sequence[QuestionRecord],
    self_examples: int = DEFAULT_SELF_EXAMPLES,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    """Numbered exemplar questions (no steps), then the recall instruction."""
    _check_exemplars(target, exemplars)
    if self_examples < 1:
        raise PromptError(f"self_examples must be >= 1, got {self_examples}")
    lines = [
        templates.exemplar_question_line.format(index=index, question=exemplar.question)
        for index, exemplar in enumerate(exemplars, start=1)
    ]
    lines.append(templates.recall.format(question=target.question))
    return RenderedPrompt(
        text="\n".join(lines),
        strategy=PromptStrategy(
            kind=ANALOGICAL_COT, k=len(exemplars), self_examples=self_examples
        ),
        exemplar_ids=tuple(ex.id for ex in exemplars),
        target_id=target.id,
    )


def render(
    target: QuestionRecord,
    strategy: PromptStrategy,
    exemplars: Sequence[QuestionRecord] = (),
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    """Dispatch to the renderer for the strategy kind."""
    if strategy.kind == BASELINE:
        return render_baseline(target, templates)
    if strategy.kind == KSHOT_COT:
        return render_kshot_cot(target, exemplars, templates)
    if strategy.kind == ANALOGICAL:
        return render_analogical(target, strategy.self_examples, templates)
    return render_analogical_cot(target, exemplars, strategy.self_examples, templates)
