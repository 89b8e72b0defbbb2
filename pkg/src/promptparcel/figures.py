"""Matplotlib rendering for the report path. Files only, no display."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .data import LengthStats
from .experiment import ExperimentResult, SweepRow


def save_owa_sweep(result: ExperimentResult, path) -> None:
    """Per-method OWA score against the trade-off weight."""
    weights = result.config.owa_sweep
    plt.figure(figsize=(8, 5))
    for report in result.reports:
        scores = [report.owa_scores[w] for w in weights]
        plt.plot(weights, scores, marker="o", markersize=3, label=report.method.value)
    plt.xlabel("weight on the larger objective")
    plt.ylabel("OWA score")
    plt.title("Efficiency/faithfulness trade-off across weights")
    plt.legend(fontsize=8)
    plt.tight_layout()
    plt.savefig(path)
    plt.close()


def save_tradeoff_scatter(result: ExperimentResult, path) -> None:
    """Raw efficiency against faithfulness, one point per method; the
    method selected at the sweep's median weight gets a black x."""
    weights = result.config.owa_sweep
    median_weight = sorted(weights)[len(weights) // 2]
    best = result.owa_selection[median_weight]
    plt.figure(figsize=(7, 5))
    for report in result.reports:
        x = report.efficiency.weighted_efficiency_e
        y = report.faithfulness.overall_dh
        plt.scatter([x], [y], s=30)
        plt.annotate(report.method.value, (x, y), fontsize=8,
                     xytext=(4, 4), textcoords="offset points")
        if report.method == best:
            plt.scatter([x], [y], marker="x", s=90, color="black")
    plt.xlabel("weighted efficiency e")
    plt.ylabel("faithfulness D_H")
    plt.title(f"Method trade-off (x marks the pick at w={median_weight:g})")
    plt.tight_layout()
    plt.savefig(path)
    plt.close()


def save_sweep_time(rows: list[SweepRow], path) -> None:
    sizes = [r.batch_size for r in rows]
    plt.figure(figsize=(7, 5))
    plt.plot(sizes, [r.total_time_s for r in rows], marker="o", label="batched")
    plt.plot(sizes, [r.separate_time_s for r in rows], linestyle="--", label="separate")
    plt.xlabel("batch size l")
    plt.ylabel("total running time (s)")
    plt.title("Running time against batch size")
    plt.legend()
    plt.tight_layout()
    plt.savefig(path)
    plt.close()


def save_sweep_gain_ratio(rows: list[SweepRow], path) -> None:
    sizes = [r.batch_size for r in rows]
    plt.figure(figsize=(7, 5))
    plt.plot(sizes, [r.gain for r in rows], marker="o", label="time gain")
    plt.plot(sizes, [r.output_token_ratio for r in rows], marker="s",
             label="output token ratio")
    plt.xlabel("batch size l")
    plt.ylabel("ratio vs separate")
    plt.title("Gain and output ratio against batch size")
    plt.legend()
    plt.tight_layout()
    plt.savefig(path)
    plt.close()


def save_zscore_histogram(
    stats: LengthStats, edges: list[float], counts: list[int], path,
    dataset_name: str = "workload",
) -> None:
    centers = [(edges[i] + edges[i + 1]) / 2 for i in range(len(counts))]
    width = edges[1] - edges[0]
    plt.figure(figsize=(7, 5))
    plt.bar(centers, counts, width=width * 0.9)
    plt.xlabel("token-length z-score")
    plt.ylabel("prompts")
    plt.title(f"{dataset_name}: length dispersion (RSD {stats.rsd_percent:.1f}%)")
    plt.tight_layout()
    plt.savefig(path)
    plt.close()
