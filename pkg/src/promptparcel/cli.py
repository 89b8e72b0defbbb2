"""Command-line entry point.

Subcommands:
  run             run an experiment and write report JSON/table/CSV/figures
  sweep           re-run one method across batch sizes, emit CSV + figures
  stats           length-dispersion statistics for a dataset
  fit-cost-model  least-squares latency model from a timing log

Exit codes: 1 configuration error, 2 dataset error, 3 backend failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from .backend import BackendConfig, CostModelParams
from .clique import CliqueMethod
from .errors import (
    BackendError,
    DispatchIncomplete,
    EmptyWorkload,
    EngineError,
    ParseError,
    RankDeficient,
    SchemaError,
)
from .evaluation import fit_cost_model
from .experiment import (
    DEFAULT_OWA_SWEEP,
    ExperimentConfig,
    dataset_stats,
    run_experiment,
    sweep_batch_size,
)
from .reporting import (
    format_stats_csv,
    format_table,
    write_report_files,
    write_stats_files,
    write_sweep_files,
    zscore_histogram,
)

EXIT_CONFIG = 1
EXIT_DATASET = 2
EXIT_BACKEND = 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; that code is reserved
    # for dataset problems here, so re-route to the config-error path.
    def error(self, message):
        raise ConfigError(message)


def parse_methods(spec: str) -> list[CliqueMethod]:
    if spec.strip().lower() == "all":
        return [m for m in CliqueMethod if m != CliqueMethod.SEPARATE]
    return [CliqueMethod.parse(part) for part in spec.split(",") if part.strip()]


def parse_owa_weights(spec: str) -> list[float]:
    """Parse "start:stop:step" into an inclusive list of weights."""
    try:
        start_s, stop_s, step_s = spec.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ConfigError(f"bad --owa-weights {spec!r}, expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"bad --owa-weights range {spec!r}")
    weights = []
    i = 0
    while True:
        w = round(start + i * step, 10)
        if w > stop + 1e-12:
            break
        weights.append(min(w, 1.0))
        i += 1
    return weights


def parse_cost_params(spec: str) -> CostModelParams:
    try:
        base, w_in, w_out = (float(x) for x in spec.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --cost-params {spec!r}, expected b,w1,w2") from exc
    return CostModelParams(base_seconds=base, in_coeff=w_in, out_coeff=w_out)


def parse_sizes(spec: str) -> list[int]:
    try:
        return [int(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --sizes {spec!r}") from exc


def _add_common_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON experiment config file")
    sub.add_argument("--dataset", help="JSONL dataset path")
    sub.add_argument("--methods", help='comma list of clique methods or "all"')
    sub.add_argument("--batch-size", type=int, dest="batch_size")
    sub.add_argument("--repetitions", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--backend", choices=["http", "simulated", "replay"])
    sub.add_argument("--endpoint-url", dest="endpoint_url")
    sub.add_argument("--model", dest="model_name")
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--max-in-flight", type=int, dest="max_in_flight")
    sub.add_argument("--timeout", type=float, dest="timeout_seconds")
    sub.add_argument("--fallback-separate", action="store_true", default=None,
                     dest="fallback_separate")
    sub.add_argument("--cache-path", dest="cache_path")
    sub.add_argument("--cost-params", dest="cost_params",
                     help="latency model as b,w1,w2")
    sub.add_argument("--weight", type=float, dest="efficiency_weight",
                     help="input-token weight w in the cost ratio")
    sub.add_argument("--owa-weights", dest="owa_weights",
                     help='OWA sweep as "start:stop:step"')
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--deterministic-report", action="store_true", default=None,
                     dest="deterministic_report")
    sub.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    sub.add_argument("--sim-truncation", type=float, dest="sim_truncation",
                     help="simulated batched-answer truncation factor in (0,1]")
    sub.add_argument("--sim-answer-tokens", type=int, dest="sim_answer_tokens",
                     help="pad simulated answers to this many tokens")
    sub.add_argument("--no-classify", action="store_true",
                     help="disable the question-type classifier for CC/CpSC")
    sub.add_argument("--dim", type=int, dest="embedding_dim")
    sub.add_argument("--users", type=int, help="assign prompts round-robin to N users")


def build_parser() -> _Parser:
    parser = _Parser(prog="promptparcel", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run an experiment")
    _add_common_options(run)

    sweep = subs.add_parser("sweep", help="batch-size sweep")
    _add_common_options(sweep)
    sweep.add_argument("--sizes", default="1,2,4,8,16",
                       help="comma list of batch sizes")

    stats = subs.add_parser("stats", help="dataset length dispersion")
    stats.add_argument("--dataset", required=True)
    stats.add_argument("--out")
    stats.add_argument("--no-figures", action="store_true")

    fit = subs.add_parser("fit-cost-model", help="fit the latency model")
    fit.add_argument("--timing-log", required=True,
                     help="CSV (in_tokens,out_tokens,seconds) or replay-cache JSONL")
    fit.add_argument("--out", help="write fitted params as JSON")

    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return obj


def _merged(args: argparse.Namespace, file_config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in file_config:
        return file_config[key]
    return default


def build_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    file_config = _load_config_file(args.config) if args.config else {}

    dataset = _merged(args, file_config, "dataset", None)
    if dataset is None:
        raise ConfigError("a dataset is required (--dataset or config file)")

    methods = _merged(args, file_config, "methods", "all")
    if isinstance(methods, str):
        methods = parse_methods(methods)
    else:
        methods = [CliqueMethod.parse(m) for m in methods]

    backend_file = dict(file_config.get("backend", {}))
    kind = getattr(args, "backend", None) or backend_file.get("kind", "simulated")
    try:
        backend = BackendConfig(
            kind=kind,
            endpoint_url=_merged(args, backend_file, "endpoint_url", None),
            model_name=_merged(args, backend_file, "model_name", None),
            temperature=_merged(args, backend_file, "temperature", 0.0),
            max_in_flight=_merged(args, backend_file, "max_in_flight", 4),
            timeout_seconds=_merged(args, backend_file, "timeout_seconds", 30.0),
            fallback_separate=bool(
                _merged(args, backend_file, "fallback_separate", False)
            ),
            cache_path=_merged(args, backend_file, "cache_path", None),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cost_spec = _merged(args, file_config, "cost_params", None)
    if cost_spec is None:
        cost_params = CostModelParams()
    elif isinstance(cost_spec, str):
        cost_params = parse_cost_params(cost_spec)
    else:
        cost_params = CostModelParams(**cost_spec)

    owa_spec = _merged(args, file_config, "owa_weights", None)
    if owa_spec is None:
        owa_sweep = list(DEFAULT_OWA_SWEEP)
    elif isinstance(owa_spec, str):
        owa_sweep = parse_owa_weights(owa_spec)
    else:
        owa_sweep = [float(w) for w in owa_spec]

    try:
        return ExperimentConfig(
            dataset_path=dataset,
            methods=methods,
            batch_size=int(_merged(args, file_config, "batch_size", 8)),
            repetitions=int(_merged(args, file_config, "repetitions", 10)),
            seed=int(_merged(args, file_config, "seed", 0)),
            backend=backend,
            cost_params=cost_params,
            efficiency_weight=float(
                _merged(args, file_config, "efficiency_weight", 1.0)
            ),
            owa_sweep=owa_sweep,
            output_path=_merged(args, file_config, "out", "reports"),
            deterministic_report=bool(
                _merged(args, file_config, "deterministic_report", False)
            ),
            sim_truncation=float(_merged(args, file_config, "sim_truncation", 1.0)),
            sim_answer_tokens=_merged(args, file_config, "sim_answer_tokens", None),
            classify_concepts=not getattr(args, "no_classify", False)
            and bool(_merged(args, file_config, "classify_concepts", True)),
            embedding_dim=int(_merged(args, file_config, "embedding_dim", 256)),
            users=int(_merged(args, file_config, "users", 1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args: argparse.Namespace) -> int:
    config = build_experiment_config(args)
    result = run_experiment(config)
    paths = write_report_files(
        result, config.output_path, figures=not args.no_figures
    )
    sys.stdout.write(format_table(result.reports))
    sys.stdout.write(f"report written to {paths['json']}\n")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = build_experiment_config(args)
    sizes = parse_sizes(args.sizes)
    rows = sweep_batch_size(config, sizes)
    paths = write_sweep_files(rows, config.output_path, figures=not args.no_figures)
    writer = csv.writer(sys.stdout)
    writer.writerow(["batch_size", "total_time_s", "gain", "output_token_ratio"])
    for row in rows:
        writer.writerow(
            [row.batch_size, row.total_time_s, row.gain, row.output_token_ratio]
        )
    sys.stdout.write(f"sweep written to {paths['csv']}\n")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    workload, stats = dataset_stats(args.dataset)
    edges, counts = zscore_histogram(stats)
    sys.stdout.write(format_stats_csv(stats, edges, counts))
    if args.out:
        paths = write_stats_files(
            stats, args.out, figures=not args.no_figures, dataset_name=workload.name
        )
        sys.stdout.write(f"stats written to {paths['csv']}\n")
    return 0


def _read_timing_log(path: str) -> list[tuple[int, int, float]]:
    samples: list[tuple[int, int, float]] = []
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".jsonl"):
        for line in text.splitlines():
            if line.strip():
                record = json.loads(line)
                samples.append(
                    (int(record["in_tokens"]), int(record["out_tokens"]),
                     float(record["latency_s"]))
                )
        return samples
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        samples.append(
            (int(row["in_tokens"]), int(row["out_tokens"]), float(row["seconds"]))
        )
    return samples


def _cmd_fit(args: argparse.Namespace) -> int:
    samples = _read_timing_log(args.timing_log)
    params, rms = fit_cost_model(samples)
    payload = {
        "base_seconds": params.base_seconds,
        "in_coeff": params.in_coeff,
        "out_coeff": params.out_coeff,
        "rms_residual": rms,
        "samples": len(samples),
    }
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n",
                                  encoding="utf-8")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "stats": _cmd_stats,
    "fit-cost-model": _cmd_fit,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, SchemaError, EmptyWorkload) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except FileNotFoundError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (BackendError, DispatchIncomplete) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (RankDeficient, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
