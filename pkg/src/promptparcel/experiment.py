"""Experiment orchestration: run a workload through the selected grouping
methods against a backend, score every method against the SEPARATE
baseline, and pick trade-off winners over an OWA weight sweep.

The SEPARATE control always runs first; its answers are the originals that
faithfulness is measured against and its totals are the denominators of
the efficiency ratios.
"""

import math
from dataclasses import dataclass, field

from . import text as text_mod
from .backend import (
    BackendConfig,
    CostModelParams,
    GroupRunResult,
    ScriptedAnswers,
    make_backend,
    run_plan_groups,
)
from .clique import (
    CliqueMethod,
    GroupingPlan,
    WorkloadFeatures,
    make_grouping,
)
from .data import (
    Workload,
    assign_users_round_robin,
    length_dispersion_stats,
    load_dataset,
)
from .evaluation import (
    EfficiencyReport,
    FaithfulnessScore,
    build_efficiency_report,
    method_faithfulness,
)
from .tradeoff import ObjectivePoint, OwaWeights, normalize_objectives, select_method

DEFAULT_OWA_SWEEP = [round(i * 0.1, 10) for i in range(11)]

_SIMILARITY_METHODS = (CliqueMethod.SSC, CliqueMethod.CPSC, CliqueMethod.MDC)


@dataclass
class ExperimentConfig:
    dataset_path: str
    methods: list[CliqueMethod] = field(
        default_factory=lambda: [m for m in CliqueMethod if m != CliqueMethod.SEPARATE]
    )
    batch_size: int = 8
    repetitions: int = 10
    seed: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    cost_params: CostModelParams = field(default_factory=CostModelParams)
    efficiency_weight: float = 1.0
    owa_sweep: list[float] = field(default_factory=lambda: list(DEFAULT_OWA_SWEEP))
    output_path: str | None = None
    deterministic_report: bool = False
    sim_truncation: float = 1.0
    sim_answer_tokens: int | None = None
    classify_concepts: bool = True
    embedding_dim: int = text_mod.DEFAULT_DIM
    users: int = 1

    def all_methods(self) -> list[CliqueMethod]:
        """SEPARATE first (it is the baseline), then the rest in config
        order, deduplicated."""
        ordered = [CliqueMethod.SEPARATE]
        for method in self.methods:
            if method not in ordered:
                ordered.append(method)
        return ordered

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MethodReport:
    method: CliqueMethod
    efficiency: EfficiencyReport
    faithfulness: FaithfulnessScore
    accuracy: float
    no_ground_truth_count: int
    owa_scores: dict[float, float]
    call_count: int
    parse_failure_count: int
    fallback_calls: int
    flagged_prompt_count: int


@dataclass
class MethodRun:
    method: CliqueMethod
    plan: GroupingPlan
    results: list[GroupRunResult]
    mean_time_s: float

    @property
    def answers(self) -> dict[str, str]:
        merged: dict[str, str] = {}
        for result in self.results:
            merged.update(result.answers)
        return merged

    @property
    def total_in_tokens(self) -> int:
        return sum(r.total_input_tokens for r in self.results)

    @property
    def total_out_tokens(self) -> int:
        return sum(r.total_output_tokens for r in self.results)

    def answer_token_total(self) -> int:
        return sum(
            text_mod.tokenize_count(answer) for answer in self.answers.values()
        )

    @property
    def call_count(self) -> int:
        return sum(len(r.completions) for r in self.results)

    @property
    def parse_failure_count(self) -> int:
        return sum(1 for r in self.results if not r.parse_complete)

    @property
    def fallback_calls(self) -> int:
        return sum(r.fallback_calls for r in self.results)

    @property
    def flagged_prompt_count(self) -> int:
        return sum(len(r.flagged_member_ids) for r in self.results)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    workload: Workload
    reports: list[MethodReport]
    owa_selection: dict[float, CliqueMethod]
    runs: dict[CliqueMethod, MethodRun]


def _build_backend(config: ExperimentConfig, workload: Workload):
    answers = None
    if config.backend.kind == "simulated":
        answers = ScriptedAnswers.from_workload(
            workload,
            pad_to_tokens=config.sim_answer_tokens,
            truncation=config.sim_truncation,
        )
    return make_backend(
        config.backend, cost_params=config.cost_params, answers=answers
    )


def _max_workers(config: ExperimentConfig) -> int:
    # The simulator and the cache are deterministic and cheap; only live
    # calls benefit from concurrency.
    return config.backend.max_in_flight if config.backend.kind == "http" else 1


def run_method(
    config: ExperimentConfig,
    method: CliqueMethod,
    workload: Workload,
    backend,
    features: WorkloadFeatures | None,
) -> MethodRun:
    """Group, complete, and dispatch one method, averaging times over the
    configured repetitions."""
    l = 1 if method == CliqueMethod.SEPARATE else config.batch_size
    plan = make_grouping(
        method,
        workload,
        l,
        seed=config.seed,
        features=features,
        dim=config.embedding_dim,
        classify_missing=config.classify_concepts,
    )
    times: list[float] = []
    canonical: list[GroupRunResult] | None = None
    for _ in range(config.repetitions):
        results = run_plan_groups(
            backend,
            plan,
            workload,
            fallback_separate=config.backend.fallback_separate,
            max_workers=_max_workers(config),
        )
        times.append(math.fsum(r.total_latency for r in results))
        if canonical is None:
            canonical = results
        elif config.backend.kind in ("simulated", "replay"):
            _assert_repetition_stable(canonical, results)
    return MethodRun(
        method=method,
        plan=plan,
        results=canonical,
        mean_time_s=math.fsum(times) / len(times),
    )


def _assert_repetition_stable(
    first: list[GroupRunResult], later: list[GroupRunResult]
) -> None:
    for a, b in zip(first, later):
        if a.answers != b.answers or a.total_input_tokens != b.total_input_tokens \
                or a.total_output_tokens != b.total_output_tokens:
            raise AssertionError(
                "deterministic backend produced different results across repetitions"
            )


def _load_workload(config: ExperimentConfig) -> Workload:
    workload = load_dataset(config.dataset_path)
    if config.users > 1:
        workload = assign_users_round_robin(workload, config.users)
    return workload


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return run_experiment_on(config, _load_workload(config))


def run_experiment_on(
    config: ExperimentConfig, workload: Workload
) -> ExperimentResult:
    """Like run_experiment but for an already-loaded workload."""
    methods = config.all_methods()
    features = WorkloadFeatures.from_workload(
        workload,
        dim=config.embedding_dim,
        with_similarity=any(m in _SIMILARITY_METHODS for m in methods),
        classify_missing=config.classify_concepts,
    )
    backend = _build_backend(config, workload)

    runs: dict[CliqueMethod, MethodRun] = {}
    for method in methods:
        runs[method] = run_method(config, method, workload, backend, features)

    baseline = runs[CliqueMethod.SEPARATE]
    baseline_answers = baseline.answers
    baseline_answer_tokens = baseline.answer_token_total()

    reports: list[MethodReport] = []
    points: list[ObjectivePoint] = []
    for method in methods:
        run = runs[method]
        answers = run.answers
        _check_coverage(answers, workload, method)
        efficiency = build_efficiency_report(
            method,
            CliqueMethod.SEPARATE,
            method_time=run.mean_time_s,
            baseline_time=baseline.mean_time_s,
            method_in_tokens=run.total_in_tokens,
            baseline_in_tokens=baseline.total_in_tokens,
            method_answer_tokens=run.answer_token_total(),
            baseline_answer_tokens=baseline_answer_tokens,
            method_out_tokens=run.total_out_tokens,
            w=config.efficiency_weight,
        )
        faithfulness = method_faithfulness(
            run.plan, answers, baseline_answers, workload, dim=config.embedding_dim
        )
        _order_per_item(faithfulness, workload)
        scored = [r for r in faithfulness.per_item if r.has_ground_truth]
        accuracy = (
            sum(1 for r in scored if r.accurate) / len(scored) if scored else 1.0
        )
        reports.append(
            MethodReport(
                method=method,
                efficiency=efficiency,
                faithfulness=faithfulness,
                accuracy=accuracy,
                no_ground_truth_count=len(faithfulness.per_item) - len(scored),
                owa_scores={},
                call_count=run.call_count,
                parse_failure_count=run.parse_failure_count,
                fallback_calls=run.fallback_calls,
                flagged_prompt_count=run.flagged_prompt_count,
            )
        )
        points.append(
            ObjectivePoint(
                method=method,
                efficiency_raw=efficiency.weighted_efficiency_e,
                faithfulness_raw=faithfulness.overall_dh,
            )
        )

    normalized = normalize_objectives(points)
    owa_selection: dict[float, CliqueMethod] = {}
    for weight in config.owa_sweep:
        best, scores = select_method(normalized, OwaWeights(weight))
        owa_selection[weight] = best
        for report in reports:
            report.owa_scores[weight] = scores[report.method]

    return ExperimentResult(
        config=config,
        workload=workload,
        reports=reports,
        owa_selection=owa_selection,
        runs=runs,
    )


def _check_coverage(
    answers: dict[str, str], workload: Workload, method: CliqueMethod
) -> None:
    expected = {p.id for p in workload.prompts}
    if set(answers) != expected:
        raise AssertionError(
            f"{method.value} answered {len(answers)} of {len(expected)} prompts"
        )


def _order_per_item(faithfulness: FaithfulnessScore, workload: Workload) -> None:
    # Reports list items in workload order regardless of grouping.
    position = {p.id: i for i, p in enumerate(workload.prompts)}
    faithfulness.per_item.sort(key=lambda r: position[r.prompt_id])


@dataclass
class SweepRow:
    batch_size: int
    total_time_s: float
    separate_time_s: float
    gain: float
    output_token_ratio: float
    in_tokens: int
    out_tokens: int
    answer_tokens: int
    calls: int


def sweep_batch_size(config: ExperimentConfig, sizes: list[int]) -> list[SweepRow]:
    """Re-run one method at several batch sizes and relate each run to the
    SEPARATE control: total simulated/recorded time, the time gain, and
    the delivered-output token ratio."""
    if not sizes:
        raise ValueError("no batch sizes given")
    workload = _load_workload(config)
    method = next(
        (m for m in config.methods if m != CliqueMethod.SEPARATE), CliqueMethod.RC
    )
    features = WorkloadFeatures.from_workload(
        workload,
        dim=config.embedding_dim,
        with_similarity=method in _SIMILARITY_METHODS,
        classify_missing=config.classify_concepts,
    )
    backend = _build_backend(config, workload)
    baseline = run_method(
        config, CliqueMethod.SEPARATE, workload, backend, features
    )
    baseline_answer_tokens = baseline.answer_token_total()

    rows: list[SweepRow] = []
    for l in sizes:
        sized = ExperimentConfig(
            dataset_path=config.dataset_path,
            methods=[method],
            batch_size=l,
            repetitions=config.repetitions,
            seed=config.seed,
            backend=config.backend,
            cost_params=config.cost_params,
            sim_truncation=config.sim_truncation,
            sim_answer_tokens=config.sim_answer_tokens,
            classify_concepts=config.classify_concepts,
            embedding_dim=config.embedding_dim,
        )
        run = run_method(sized, method, workload, backend, features)
        answer_tokens = run.answer_token_total()
        rows.append(
            SweepRow(
                batch_size=l,
                total_time_s=run.mean_time_s,
                separate_time_s=baseline.mean_time_s,
                gain=baseline.mean_time_s / run.mean_time_s,
                output_token_ratio=answer_tokens / baseline_answer_tokens,
                in_tokens=run.total_in_tokens,
                out_tokens=run.total_out_tokens,
                answer_tokens=answer_tokens,
                calls=run.call_count,
            )
        )
    return rows


def dataset_stats(dataset_path: str):
    """Length-dispersion statistics plus histogram data for the z-scores."""
    workload = load_dataset(dataset_path)
    stats = length_dispersion_stats(workload)
    return workload, stats
