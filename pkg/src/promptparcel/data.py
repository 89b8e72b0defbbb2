"""Workload loading and length-dispersion statistics.

Datasets are plain JSONL, one object per line:

    {"id": str, "user": str?, "context": str?, "question": str,
     "answer": str?, "concept": str?, "choices": [str]?}

``type`` is accepted as an alias for ``concept`` and unknown keys are
ignored, so converted QA dumps load without per-dataset adapters. When a
context is present the prompt text is the context, a newline, then the
question.
"""

import json
import math
import string
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import text as text_mod
from .errors import EmptyWorkload, ParseError, SchemaError

INTERROGATIVES = ("what", "when", "where", "who", "why", "how")


@dataclass(frozen=True)
class Prompt:
    id: str
    user_id: str
    text: str
    concept: str | None = None
    ground_truth: str | None = None
    choices: tuple[str, ...] | None = None

    def to_record(self) -> dict:
        record = {"id": self.id, "user": self.user_id, "question": self.text}
        if self.concept is not None:
            record["concept"] = self.concept
        if self.ground_truth is not None:
            record["answer"] = self.ground_truth
        if self.choices is not None:
            record["choices"] = list(self.choices)
        return record


@dataclass(frozen=True)
class Workload:
    prompts: tuple[Prompt, ...]
    name: str = "workload"

    def __len__(self) -> int:
        return len(self.prompts)

    def by_id(self, prompt_id: str) -> Prompt:
        for prompt in self.prompts:
            if prompt.id == prompt_id:
                return prompt
        raise KeyError(prompt_id)


@dataclass
class LengthStats:
    mean_tokens: float
    stdev_tokens: float
    rsd_percent: float
    z_scores: list[float] = field(default_factory=list)


def _validate_choice(gt: str, choices: tuple[str, ...], line_number: int) -> None:
    if len(gt) == 1 and gt.upper() in string.ascii_uppercase:
        index = string.ascii_uppercase.index(gt.upper())
        if index >= len(choices):
            raise SchemaError(
                f"answer letter {gt!r} is out of range for {len(choices)} choices",
                line_number,
            )
        return
    if choices.count(gt) != 1:
        raise SchemaError(
            f"answer {gt!r} does not identify exactly one choice", line_number
        )


def _prompt_from_obj(obj: dict, line_number: int) -> Prompt:
    question = obj.get("question")
    if question is None:
        raise SchemaError("missing required field 'question'", line_number)
    question = str(question)
    context = obj.get("context")
    prompt_text = f"{context}\n{question}" if context else question
    if not prompt_text.strip():
        raise SchemaError("prompt text is empty", line_number)

    prompt_id = str(obj["id"]) if "id" in obj else f"q{line_number}"
    concept = obj.get("concept", obj.get("type"))
    answer = obj.get("answer")
    choices = obj.get("choices")
    if choices is not None:
        if not isinstance(choices, list) or not choices:
            raise SchemaError("'choices' must be a non-empty list", line_number)
        choices = tuple(str(c) for c in choices)
    ground_truth = None if answer is None else str(answer)
    if choices is not None and ground_truth is not None:
        _validate_choice(ground_truth, choices, line_number)

    return Prompt(
        id=prompt_id,
        user_id=str(obj.get("user", "u0")),
        text=prompt_text,
        concept=None if concept is None else str(concept),
        ground_truth=ground_truth,
        choices=choices,
    )


def load_dataset(path: str | Path) -> Workload:
    """Read a JSONL dataset into a Workload, preserving line order.

    Raises ParseError for malformed JSON lines, SchemaError for records
    missing a question or with inconsistent choices, and EmptyWorkload
    when the file yields no prompts.
    """
    path = Path(path)
    prompts: list[Prompt] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(line_number, "expected a JSON object")
            prompt = _prompt_from_obj(obj, line_number)
            if prompt.id in seen_ids:
                raise SchemaError(f"duplicate prompt id {prompt.id!r}", line_number)
            seen_ids.add(prompt.id)
            prompts.append(prompt)
    if not prompts:
        raise EmptyWorkload(f"{path} contains no prompts")
    return Workload(prompts=tuple(prompts), name=path.stem)


def classify_question(prompt_text: str) -> str:
    """Rule-based question-type label from the first interrogative word.

    Only the last non-empty line is inspected, which is the question part
    of a context+question prompt. Returns one of what/when/where/who/why/
    how, or "other".
    """
    lines = [ln for ln in prompt_text.splitlines() if ln.strip()]
    question = lines[-1] if lines else prompt_text
    for token in text_mod.tokenize(question):
        if token in INTERROGATIVES:
            return token
    return "other"


def resolve_concept(prompt: Prompt, classify_missing: bool = True) -> str | None:
    if prompt.concept is not None:
        return prompt.concept
    if classify_missing:
        return classify_question(prompt.text)
    return None


def assign_users_round_robin(workload: Workload, n_users: int) -> Workload:
    """Spread the prompts over ``n_users`` synthetic users in order."""
    if n_users < 1:
        raise ValueError("need at least one user")
    prompts = tuple(
        replace(p, user_id=f"u{i % n_users}") for i, p in enumerate(workload.prompts)
    )
    return Workload(prompts=prompts, name=workload.name)


def length_dispersion_stats(workload: Workload) -> LengthStats:
    """Population mean/stdev of token lengths, relative standard deviation
    as a percentage, and per-prompt z-scores (all 0 when stdev is 0)."""
    lengths = [text_mod.tokenize_count(p.text) for p in workload.prompts]
    m = len(lengths)
    mean = math.fsum(lengths) / m
    variance = math.fsum((x - mean) ** 2 for x in lengths) / m
    stdev = math.sqrt(variance)
    rsd = 100.0 * stdev / mean if mean > 0 else 0.0
    if stdev > 0:
        z_scores = [(x - mean) / stdev for x in lengths]
    else:
        z_scores = [0.0] * m
    return LengthStats(
        mean_tokens=mean, stdev_tokens=stdev, rsd_percent=rsd, z_scores=z_scores
    )
