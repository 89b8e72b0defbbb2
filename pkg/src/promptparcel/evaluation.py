"""Scoring: answer accuracy, faithfulness of batched answers against the
unbatched originals, relative cost / weighted efficiency, batching gain,
and least-squares fitting of the latency cost model.

The faithfulness contribution of one answer pair is
cosine * (BLEU + ROUGE-L) * accuracy_indicator, summed per group and
averaged over groups. Weighted efficiency multiplies the time speedup by
the token-cost ratio, so a method cannot look faster merely by emitting
shorter answers.
"""

import math
import re
import string
from dataclasses import dataclass

import numpy as np

from . import text as text_mod
from .backend import CostModelParams
from .clique import CliqueMethod, GroupingPlan
from .data import Prompt, Workload
from .errors import DivisionByZero, MissingAnswer, NoGroundTruth, RankDeficient

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass
class ItemFaithfulness:
    prompt_id: str
    cosine: float
    bleu: float
    rouge: float
    accurate: bool
    contribution: float
    has_ground_truth: bool = True


@dataclass
class FaithfulnessScore:
    per_item: list[ItemFaithfulness]
    per_group_d: list[float]
    overall_dh: float
    per_item_mean: float  # supplementary: overall_dh rescaled per prompt


@dataclass
class EfficiencyReport:
    method: CliqueMethod
    baseline: CliqueMethod
    total_time_s: float
    total_in_tokens: int
    total_out_tokens: int
    answer_out_tokens: int
    relative_cost_c: float
    weighted_efficiency_e: float
    weight_w: float


def normalize_answer(answer: str) -> str:
    """Casefold, strip punctuation, drop articles, collapse whitespace."""
    lowered = answer.casefold().translate(_PUNCT_TABLE)
    stripped = _ARTICLE_RE.sub(" ", lowered)
    return " ".join(stripped.split())


def _choice_index(prompt: Prompt) -> int:
    gt = prompt.ground_truth
    if len(gt) == 1 and gt.upper() in string.ascii_uppercase:
        return string.ascii_uppercase.index(gt.upper())
    return prompt.choices.index(gt)


def accuracy_match(answer: str, prompt: Prompt) -> bool:
    """Whether the answer matches the prompt's ground truth.

    Free text: the normalized ground truth must appear inside the
    normalized answer. Multiple choice: the answer must contain either the
    correct option letter (as a standalone token) or the option text.
    """
    if prompt.ground_truth is None:
        raise NoGroundTruth(prompt.id)
    norm_answer = normalize_answer(answer)
    if prompt.choices is None:
        return normalize_answer(prompt.ground_truth) in norm_answer
    index = _choice_index(prompt)
    # Case-sensitive letter check; a lowercase "a" is far more likely to be
    # an article than a selected option.
    letter = string.ascii_uppercase[index]
    if letter in text_mod.surface_tokens(answer):
        return True
    option = normalize_answer(prompt.choices[index])
    return bool(option) and option in norm_answer


def item_faithfulness(
    batched_answer: str,
    separate_answer: str,
    prompt: Prompt,
    *,
    dim: int = text_mod.DEFAULT_DIM,
) -> ItemFaithfulness:
    """Score one batched answer against the unbatched original.

    Prompts without ground truth take an accuracy indicator of 1 so the
    similarity terms still count; they are flagged and left out of
    accuracy tables.
    """
    cosine = text_mod.cosine_similarity(
        text_mod.embed_text(batched_answer, dim), text_mod.embed_text(separate_answer, dim)
    )
    bleu = text_mod.bleu_score(batched_answer, separate_answer)
    rouge = text_mod.rouge_l_score(batched_answer, separate_answer)
    has_gt = prompt.ground_truth is not None
    accurate = accuracy_match(batched_answer, prompt) if has_gt else True
    contribution = cosine * (bleu + rouge) * (1.0 if accurate else 0.0)
    return ItemFaithfulness(
        prompt_id=prompt.id,
        cosine=cosine,
        bleu=bleu,
        rouge=rouge,
        accurate=accurate,
        contribution=contribution,
        has_ground_truth=has_gt,
    )


def method_faithfulness(
    plan: GroupingPlan,
    batched_answers: dict[str, str],
    baseline_answers: dict[str, str],
    workload: Workload,
    *,
    dim: int = text_mod.DEFAULT_DIM,
) -> FaithfulnessScore:
    """Per-group faithfulness sums and their average over the plan's
    groups. Raises MissingAnswer when either answer set misses a prompt."""
    by_id = {p.id: p for p in workload.prompts}
    per_item: list[ItemFaithfulness] = []
    per_group: list[float] = []
    for group in plan.groups:
        contributions = []
        for prompt_id in group.member_ids:
            if prompt_id not in batched_answers or prompt_id not in baseline_answers:
                raise MissingAnswer(prompt_id)
            record = item_faithfulness(
                batched_answers[prompt_id],
                baseline_answers[prompt_id],
                by_id[prompt_id],
                dim=dim,
            )
            per_item.append(record)
            contributions.append(record.contribution)
        per_group.append(math.fsum(contributions))
    c = len(per_group)
    overall = math.fsum(per_group) / c
    per_item_mean = math.fsum(r.contribution for r in per_item) / len(per_item)
    return FaithfulnessScore(
        per_item=per_item,
        per_group_d=per_group,
        overall_dh=overall,
        per_item_mean=per_item_mean,
    )


def relative_cost(
    in_a: int, in_b: int, out_a: int, out_b: int, w: float = 1.0
) -> float:
    """Token-cost ratio of method a against baseline b:
    w * (in_a/in_b) + out_a/out_b."""
    if in_b == 0 or out_b == 0:
        raise DivisionByZero("baseline token counts must be non-zero")
    return w * (in_a / in_b) + out_a / out_b


def weighted_efficiency(t_a: float, t_b: float, c: float) -> float:
    """Speedup of method a over baseline b, weighted by the cost ratio:
    (t_b/t_a) * c. Larger means a genuinely better method."""
    if t_a == 0:
        raise DivisionByZero("method time must be non-zero")
    return (t_b / t_a) * c


def batching_gain(m: int, b: float, t_batch: float) -> float:
    """Speedup of batching m prompts into one call, from the shared base
    time: (m-1)*b/t_batch + 1."""
    if t_batch <= 0:
        raise DivisionByZero("batch time must be positive")
    return (m - 1) * b / t_batch + 1.0


def build_efficiency_report(
    method: CliqueMethod,
    baseline: CliqueMethod,
    *,
    method_time: float,
    baseline_time: float,
    method_in_tokens: int,
    baseline_in_tokens: int,
    method_answer_tokens: int,
    baseline_answer_tokens: int,
    method_out_tokens: int,
    w: float = 1.0,
) -> EfficiencyReport:
    """Assemble the efficiency row for one method.

    Input tokens count everything transmitted (template and itemization
    included); the output side of the cost ratio counts the answer tokens
    actually delivered after dispatch, which is what makes shortened
    outputs show up as a cost penalty rather than a speedup.
    """
    c = relative_cost(
        method_in_tokens, baseline_in_tokens,
        method_answer_tokens, baseline_answer_tokens,
        w,
    )
    e = weighted_efficiency(method_time, baseline_time, c)
    return EfficiencyReport(
        method=method,
        baseline=baseline,
        total_time_s=method_time,
        total_in_tokens=method_in_tokens,
        total_out_tokens=method_out_tokens,
        answer_out_tokens=method_answer_tokens,
        relative_cost_c=c,
        weighted_efficiency_e=e,
        weight_w=w,
    )


def fit_cost_model(
    samples: list[tuple[int, int, float]],
) -> tuple[CostModelParams, float]:
    """Least-squares (base, in_coeff, out_coeff) from (in_tokens,
    out_tokens, seconds) samples; returns the params and the RMS residual.

    Raises RankDeficient when the design matrix [1, in, out] is not full
    column rank (e.g. all samples share the same lengths).
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 samples to fit three coefficients")
    design = np.array([[1.0, s[0], s[1]] for s in samples], dtype=np.float64)
    target = np.array([s[2] for s in samples], dtype=np.float64)
    rank = np.linalg.matrix_rank(design)
    if rank < 3:
        raise RankDeficient(f"design matrix rank {rank} < 3")
    coeffs, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coeffs
    rms = float(np.sqrt(np.mean(residuals**2)))
    params = CostModelParams(
        base_seconds=float(coeffs[0]),
        in_coeff=float(coeffs[1]),
        out_coeff=float(coeffs[2]),
    )
    return params, rms
