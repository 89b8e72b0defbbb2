"""promptparcel: batch multi-user LLM prompts with pluggable grouping
strategies and jointly score batching methods on weighted efficiency and
faithfulness against the one-prompt-per-call control."""

from .backend import (
    BackendConfig,
    CompletionResult,
    CostModelParams,
    ScriptedAnswers,
    SimulatedBackend,
    SimulatedClock,
    complete,
    run_group,
    simulate_complete,
)
from .batching import BatchedPrompt, ParsedAnswers, build_batch, parse_itemized
from .clique import (
    CliqueMethod,
    GroupingPlan,
    PromptGroup,
    brute_force_grouping,
    grouping_objective,
    make_grouping,
)
from .data import (
    LengthStats,
    Prompt,
    Workload,
    length_dispersion_stats,
    load_dataset,
)
from .evaluation import (
    EfficiencyReport,
    FaithfulnessScore,
    accuracy_match,
    batching_gain,
    fit_cost_model,
    item_faithfulness,
    method_faithfulness,
    relative_cost,
    weighted_efficiency,
)
from .experiment import (
    ExperimentConfig,
    MethodReport,
    run_experiment,
    sweep_batch_size,
)
from .text import (
    EmbeddingVector,
    bleu_score,
    cosine_similarity,
    embed_text,
    rouge_l_score,
    tokenize_count,
)
from .tradeoff import ObjectivePoint, OwaWeights, normalize_objectives, owa_score, select_method

__version__ = "0.1.0"
