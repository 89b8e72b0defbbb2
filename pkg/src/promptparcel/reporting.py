"""Report serialization: JSON for machines, an aligned text table for
humans, CSV for plotting, and optional rendered figures next to the CSVs.

Deterministic mode leaves out timestamps so identical runs produce
byte-identical report files.
"""

import csv
import datetime
import json
from pathlib import Path

import numpy as np

from .batching import TEMPLATE_VERSION
from .data import LengthStats
from .experiment import ExperimentConfig, ExperimentResult, MethodReport, SweepRow


def _fmt_weight(weight: float) -> str:
    return f"{weight:g}"


def config_echo(config: ExperimentConfig) -> dict:
    return {
        "dataset": str(config.dataset_path),
        "methods": [m.value for m in config.all_methods()],
        "batch_size": config.batch_size,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "backend": {
            "kind": config.backend.kind,
            "model_name": config.backend.model_name,
            "endpoint_url": config.backend.endpoint_url,
            "temperature": config.backend.temperature,
            "max_in_flight": config.backend.max_in_flight,
            "fallback_separate": config.backend.fallback_separate,
            "cache_path": config.backend.cache_path,
        },
        "cost_params": {
            "base_seconds": config.cost_params.base_seconds,
            "in_coeff": config.cost_params.in_coeff,
            "out_coeff": config.cost_params.out_coeff,
        },
        "efficiency_weight": config.efficiency_weight,
        "owa_sweep": [_fmt_weight(w) for w in config.owa_sweep],
        "sim_truncation": config.sim_truncation,
        "sim_answer_tokens": config.sim_answer_tokens,
        "embedding_dim": config.embedding_dim,
        "users": config.users,
    }


def method_report_to_dict(report: MethodReport) -> dict:
    eff = report.efficiency
    faith = report.faithfulness
    return {
        "method": report.method.value,
        "efficiency": {
            "baseline": eff.baseline.value,
            "total_time_s": eff.total_time_s,
            "total_in_tokens": eff.total_in_tokens,
            "total_out_tokens": eff.total_out_tokens,
            "answer_out_tokens": eff.answer_out_tokens,
            "relative_cost_c": eff.relative_cost_c,
            "weighted_efficiency_e": eff.weighted_efficiency_e,
            "weight_w": eff.weight_w,
        },
        "faithfulness": {
            "overall_dh": faith.overall_dh,
            "per_item_mean": faith.per_item_mean,
            "per_group_d": list(faith.per_group_d),
            "per_item": [
                {
                    "id": item.prompt_id,
                    "cosine": item.cosine,
                    "bleu": item.bleu,
                    "rouge": item.rouge,
                    "accurate": item.accurate,
                    "contribution": item.contribution,
                    "has_ground_truth": item.has_ground_truth,
                }
                for item in faith.per_item
            ],
        },
        "accuracy": report.accuracy,
        "no_ground_truth_count": report.no_ground_truth_count,
        "owa_scores": {
            _fmt_weight(w): score for w, score in report.owa_scores.items()
        },
        "call_count": report.call_count,
        "parse_failure_count": report.parse_failure_count,
        "fallback_calls": report.fallback_calls,
        "flagged_prompt_count": report.flagged_prompt_count,
    }


def result_to_dict(result: ExperimentResult) -> dict:
    payload = {
        "template_version": TEMPLATE_VERSION,
        "config_echo": config_echo(result.config),
        "per_method": [method_report_to_dict(r) for r in result.reports],
        "owa_selection": {
            _fmt_weight(w): m.value for w, m in result.owa_selection.items()
        },
    }
    if not result.config.deterministic_report:
        payload["generated_at"] = datetime.datetime.now(
            datetime.timezone.utc
        ).isoformat()
    return payload


def render_json(result: ExperimentResult) -> str:
    return json.dumps(result_to_dict(result), indent=2, sort_keys=True) + "\n"


_TABLE_COLUMNS = (
    ("method", lambda r: r.method.value),
    ("e", lambda r: f"{r.efficiency.weighted_efficiency_e:.4f}"),
    ("c", lambda r: f"{r.efficiency.relative_cost_c:.4f}"),
    ("time_s", lambda r: f"{r.efficiency.total_time_s:.3f}"),
    ("D_H", lambda r: f"{r.faithfulness.overall_dh:.4f}"),
    ("D_H/item", lambda r: f"{r.faithfulness.per_item_mean:.4f}"),
    ("accuracy", lambda r: f"{r.accuracy:.4f}"),
    ("calls", lambda r: str(r.call_count)),
    ("parse_fail", lambda r: str(r.parse_failure_count)),
)


def format_table(reports: list[MethodReport]) -> str:
    rows = [[fmt(r) for _, fmt in _TABLE_COLUMNS] for r in reports]
    headers = [name for name, _ in _TABLE_COLUMNS]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows))
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def write_methods_csv(reports: list[MethodReport], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "method", "weighted_efficiency_e", "relative_cost_c", "total_time_s",
                "total_in_tokens", "total_out_tokens", "answer_out_tokens",
                "overall_dh", "per_item_mean", "accuracy", "call_count",
                "parse_failure_count",
            ]
        )
        for r in reports:
            writer.writerow(
                [
                    r.method.value,
                    r.efficiency.weighted_efficiency_e,
                    r.efficiency.relative_cost_c,
                    r.efficiency.total_time_s,
                    r.efficiency.total_in_tokens,
                    r.efficiency.total_out_tokens,
                    r.efficiency.answer_out_tokens,
                    r.faithfulness.overall_dh,
                    r.faithfulness.per_item_mean,
                    r.accuracy,
                    r.call_count,
                    r.parse_failure_count,
                ]
            )


def write_owa_csv(result: ExperimentResult, path: Path) -> None:
    methods = [r.method for r in result.reports]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["weight"] + [m.value for m in methods] + ["selected"])
        for weight in result.config.owa_sweep:
            row = [_fmt_weight(weight)]
            for report in result.reports:
                row.append(report.owa_scores[weight])
            row.append(result.owa_selection[weight].value)
            writer.writerow(row)


def write_sweep_csv(rows: list[SweepRow], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "batch_size", "total_time_s", "separate_time_s", "gain",
                "output_token_ratio", "in_tokens", "out_tokens",
                "answer_tokens", "calls",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.batch_size, row.total_time_s, row.separate_time_s,
                    row.gain, row.output_token_ratio, row.in_tokens,
                    row.out_tokens, row.answer_tokens, row.calls,
                ]
            )


def zscore_histogram(
    stats: LengthStats, bins: int = 16, value_range: tuple[float, float] = (-4.0, 4.0)
) -> tuple[list[float], list[int]]:
    """Histogram of z-scores over a fixed range (outliers clipped into the
    edge bins so counts always sum to the prompt count)."""
    clipped = np.clip(stats.z_scores, value_range[0], value_range[1])
    counts, edges = np.histogram(clipped, bins=bins, range=value_range)
    return [float(e) for e in edges], [int(c) for c in counts]


def format_stats_csv(stats: LengthStats, edges: list[float], counts: list[int]) -> str:
    lines = ["metric,value"]
    lines.append(f"mean_tokens,{stats.mean_tokens}")
    lines.append(f"stdev_tokens,{stats.stdev_tokens}")
    lines.append(f"rsd_percent,{stats.rsd_percent}")
    lines.append("")
    lines.append("bin_left,bin_right,count")
    for i, count in enumerate(counts):
        lines.append(f"{edges[i]},{edges[i + 1]},{count}")
    return "\n".join(lines) + "\n"


def write_report_files(
    result: ExperimentResult, out_dir: str | Path, *, figures: bool = True
) -> dict[str, Path]:
    """Write report.json, report.txt, methods.csv, owa_sweep.csv, and the
    figure files into ``out_dir``; returns the paths by artifact name."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "table": out / "report.txt",
        "methods_csv": out / "methods.csv",
        "owa_csv": out / "owa_sweep.csv",
    }
    paths["json"].write_text(render_json(result), encoding="utf-8")
    paths["table"].write_text(format_table(result.reports), encoding="utf-8")
    write_methods_csv(result.reports, paths["methods_csv"])
    write_owa_csv(result, paths["owa_csv"])
    if figures:
        from . import figures as figures_mod

        paths["owa_png"] = out / "owa_sweep.png"
        paths["tradeoff_png"] = out / "tradeoff.png"
        figures_mod.save_owa_sweep(result, paths["owa_png"])
        figures_mod.save_tradeoff_scatter(result, paths["tradeoff_png"])
    return paths


def write_sweep_files(
    rows: list[SweepRow], out_dir: str | Path, *, figures: bool = True
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "sweep.csv"}
    write_sweep_csv(rows, paths["csv"])
    if figures:
        from . import figures as figures_mod

        paths["time_png"] = out / "sweep_time.png"
        paths["gain_png"] = out / "sweep_gain_ratio.png"
        figures_mod.save_sweep_time(rows, paths["time_png"])
        figures_mod.save_sweep_gain_ratio(rows, paths["gain_png"])
    return paths


def write_stats_files(
    stats: LengthStats,
    out_dir: str | Path,
    *,
    figures: bool = True,
    dataset_name: str = "workload",
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edges, counts = zscore_histogram(stats)
    paths = {"csv": out / "stats.csv"}
    paths["csv"].write_text(format_stats_csv(stats, edges, counts), encoding="utf-8")
    if figures:
        from . import figures as figures_mod

        paths["hist_png"] = out / "zscore_hist.png"
        figures_mod.save_zscore_histogram(
            stats, edges, counts, paths["hist_png"], dataset_name=dataset_name
        )
    return paths
