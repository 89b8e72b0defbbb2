"""Scoring: accuracy matching, faithfulness composition, efficiency
ratios, batching gain, and the cost-model fit."""

import math
import random

import pytest

from promptparcel.backend import (
    CostModelParams,
    ScriptedAnswers,
    SimulatedClock,
    simulate_complete,
)
from promptparcel.clique import CliqueMethod, GroupingPlan, PromptGroup
from promptparcel.data import Prompt, Workload
from promptparcel.errors import (
    DivisionByZero,
    MissingAnswer,
    NoGroundTruth,
    RankDeficient,
)
from promptparcel.evaluation import (
    accuracy_match,
    batching_gain,
    build_efficiency_report,
    fit_cost_model,
    item_faithfulness,
    method_faithfulness,
    relative_cost,
    weighted_efficiency,
)
from promptparcel.text import bleu_score, cosine_similarity, embed_text


def prompt_with(gt=None, choices=None, pid="p0"):
    return Prompt(
        id=pid, user_id="u0", text="Q?", ground_truth=gt,
        choices=tuple(choices) if choices else None,
    )


class TestAccuracyMatch:
    def test_containment_after_normalization(self):
        assert accuracy_match("The capital is Paris.", prompt_with("Paris"))

    def test_casefold(self):
        assert accuracy_match("paris", prompt_with("Paris"))

    def test_mismatch(self):
        assert not accuracy_match("London", prompt_with("Paris"))

    def test_articles_dropped(self):
        assert accuracy_match("it is the Corven estuary", prompt_with("Corven estuary"))

    def test_no_ground_truth(self):
        with pytest.raises(NoGroundTruth):
            accuracy_match("whatever", prompt_with(None))

    def test_choice_letter(self):
        prompt = prompt_with("B", choices=["red", "blue", "green"])
        assert accuracy_match("The answer is B.", prompt)
        assert accuracy_match("(B)", prompt)
        assert not accuracy_match("A", prompt)

    def test_choice_text(self):
        prompt = prompt_with("B", choices=["red", "blue", "green"])
        assert accuracy_match("I would say blue.", prompt)
        assert not accuracy_match("definitely red", prompt)

    def test_choice_by_exact_text_ground_truth(self):
        prompt = prompt_with("blue", choices=["red", "blue", "green"])
        assert accuracy_match("blue", prompt)
        assert accuracy_match("B", prompt)


class TestItemFaithfulness:
    def test_identity_contribution(self):
        record = item_faithfulness("Paris", "Paris", prompt_with("Paris"))
        assert record.accurate
        assert record.contribution == pytest.approx(2.0, abs=1e-9)

    def test_inaccurate_zeroes_contribution(self):
        record = item_faithfulness("London", "London", prompt_with("Paris"))
        assert not record.accurate
        assert record.contribution == 0.0

    def test_composed_hand_case(self):
        # ROUGE is the hand value 0.8; cosine and BLEU come from the text
        # module on the same pair, so the product is fully determined.
        batched, original = "the cat", "the cat sat"
        record = item_faithfulness(batched, original, prompt_with("the cat"))
        expected_cos = cosine_similarity(embed_text(batched), embed_text(original))
        expected_bleu = bleu_score(batched, original)
        assert record.rouge == pytest.approx(0.8, abs=1e-9)
        assert record.contribution == pytest.approx(
            expected_cos * (expected_bleu + 0.8), abs=1e-9
        )

    def test_missing_ground_truth_counts_similarity_only(self):
        record = item_faithfulness("same", "same", prompt_with(None))
        assert record.accurate
        assert not record.has_ground_truth
        assert record.contribution == pytest.approx(2.0, abs=1e-9)

    def test_contribution_range_fuzz(self):
        rng = random.Random(17)
        words = ["sun", "moon", "tide", "rock", "fern"]
        for _ in range(200):
            a = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
            b = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
            record = item_faithfulness(a, b, prompt_with(None))
            assert 0.0 <= record.contribution <= 2.0


def two_group_plan():
    return GroupingPlan(
        method=CliqueMethod.RC,
        batch_size=2,
        groups=(
            PromptGroup(1, ("p0", "p1")),
            PromptGroup(2, ("p2", "p3")),
        ),
    )


def four_prompts(gt="yes"):
    return Workload(
        prompts=tuple(
            Prompt(id=f"p{i}", user_id="u0", text=f"Q{i}?", ground_truth=gt)
            for i in range(4)
        ),
        name="t",
    )


class TestMethodFaithfulness:
    def test_group_average(self):
        workload = four_prompts()
        # Identical accurate answers: every contribution is 2, so groups of
        # two sum to 4 and the average over 2 groups is 4.
        answers = {p.id: "yes indeed" for p in workload.prompts}
        score = method_faithfulness(two_group_plan(), answers, answers, workload)
        assert score.per_group_d == pytest.approx([4.0, 4.0], abs=1e-9)
        assert score.overall_dh == pytest.approx(4.0, abs=1e-9)
        assert score.per_item_mean == pytest.approx(2.0, abs=1e-9)

    def test_separate_plan_equals_twice_accuracy(self):
        workload = four_prompts()
        plan = GroupingPlan(
            method=CliqueMethod.SEPARATE,
            batch_size=1,
            groups=tuple(
                PromptGroup(k, (p.id,)) for k, p in enumerate(workload.prompts, 1)
            ),
        )
        # Half the answers are wrong: accuracy rate 0.5, D_H = 2 * 0.5.
        answers = {
            "p0": "yes", "p1": "yes", "p2": "no way", "p3": "not at all",
        }
        score = method_faithfulness(plan, answers, answers, workload)
        assert score.overall_dh == pytest.approx(1.0, abs=1e-9)

    def test_permutation_invariant(self):
        workload = four_prompts()
        answers = {p.id: f"yes {p.id}" for p in workload.prompts}
        base = method_faithfulness(two_group_plan(), answers, answers, workload)
        swapped_plan = GroupingPlan(
            method=CliqueMethod.RC,
            batch_size=2,
            groups=(
                PromptGroup(1, ("p3", "p2")),
                PromptGroup(2, ("p1", "p0")),
            ),
        )
        swapped = method_faithfulness(swapped_plan, answers, answers, workload)
        assert swapped.overall_dh == pytest.approx(base.overall_dh, abs=1e-12)

    def test_missing_answer(self):
        workload = four_prompts()
        answers = {p.id: "yes" for p in workload.prompts}
        partial = dict(answers)
        del partial["p2"]
        with pytest.raises(MissingAnswer):
            method_faithfulness(two_group_plan(), partial, answers, workload)


class TestEfficiencyRatios:
    def test_relative_cost_direct(self):
        assert relative_cost(220, 200, 100, 100, w=1.0) == pytest.approx(2.1, abs=1e-12)

    def test_relative_cost_identity(self):
        assert relative_cost(100, 100, 50, 50, w=1.0) == 2.0

    def test_truncated_outputs_lower_cost(self):
        assert relative_cost(100, 100, 50, 100, w=1.0) == pytest.approx(1.5, abs=1e-12)

    def test_relative_cost_monotone(self):
        base = relative_cost(100, 100, 50, 100)
        assert relative_cost(100, 100, 60, 100) > base
        assert relative_cost(120, 100, 50, 100) > base

    def test_relative_cost_zero_baseline(self):
        with pytest.raises(DivisionByZero):
            relative_cost(10, 0, 10, 10)

    def test_weighted_efficiency_direct(self):
        assert weighted_efficiency(4.0, 10.0, 0.8) == pytest.approx(2.0, abs=1e-12)

    def test_weighted_efficiency_fixed_point(self):
        assert weighted_efficiency(5.0, 5.0, 2.0) == 2.0

    def test_weighted_efficiency_halved_time(self):
        assert weighted_efficiency(5.0, 10.0, 2.0) == pytest.approx(4.0, abs=1e-12)

    def test_weighted_efficiency_zero_time(self):
        with pytest.raises(DivisionByZero):
            weighted_efficiency(0.0, 10.0, 1.0)

    def test_report_identity_holds(self):
        report = build_efficiency_report(
            CliqueMethod.RC,
            CliqueMethod.SEPARATE,
            method_time=7.3,
            baseline_time=13.9,
            method_in_tokens=950,
            baseline_in_tokens=800,
            method_answer_tokens=410,
            baseline_answer_tokens=400,
            method_out_tokens=470,
            w=1.0,
        )
        expected = (13.9 / 7.3) * report.relative_cost_c
        assert report.weighted_efficiency_e == pytest.approx(expected, abs=1e-9)


class TestBatchingGain:
    def test_no_batching_no_gain(self):
        assert batching_gain(1, 0.5, 2.6) == 1.0

    def test_direct_substitution(self):
        assert batching_gain(4, 0.5, 2.6) == pytest.approx(1.5769230769, abs=1e-9)

    def test_increasing_in_m(self):
        values = [batching_gain(m, 0.5, 2.6) for m in range(1, 10)]
        assert values == sorted(values)
        assert len(set(values)) == len(values)


class TestFitCostModel:
    def test_exact_recovery(self):
        rng = random.Random(23)
        true = CostModelParams(base_seconds=0.4, in_coeff=0.002, out_coeff=0.06)
        samples = []
        for _ in range(20):
            i, o = rng.randint(5, 400), rng.randint(5, 300)
            samples.append((i, o, true.latency(i, o)))
        params, rms = fit_cost_model(samples)
        assert params.base_seconds == pytest.approx(0.4, abs=1e-6)
        assert params.in_coeff == pytest.approx(0.002, abs=1e-6)
        assert params.out_coeff == pytest.approx(0.06, abs=1e-6)
        assert rms < 1e-6

    def test_rank_deficient_on_constant_lengths(self):
        samples = [(50, 20, 1.0), (50, 20, 1.1), (50, 20, 0.9), (50, 20, 1.0)]
        with pytest.raises(RankDeficient):
            fit_cost_model(samples)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_cost_model([(1, 1, 1.0), (2, 2, 2.0)])

    def test_simulator_round_trip_recovers_ratio(self):
        # Output coefficient 50x the input coefficient, as configured.
        params = CostModelParams(base_seconds=0.5, in_coeff=0.001, out_coeff=0.05)
        rng = random.Random(31)
        samples = []
        for _ in range(30):
            n_in, n_out = rng.randint(3, 120), rng.randint(3, 90)
            prompt = " ".join(["q"] * n_in)
            answer = " ".join(["a"] * n_out)
            result = simulate_complete(
                params, prompt, ScriptedAnswers({prompt: answer}), SimulatedClock()
            )
            samples.append((result.input_tokens, result.output_tokens,
                            result.latency_seconds))
        fitted, _ = fit_cost_model(samples)
        assert fitted.out_coeff / fitted.in_coeff == pytest.approx(50.0, rel=0.01)
