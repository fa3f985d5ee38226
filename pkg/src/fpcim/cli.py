"""Command line front end.

Three subcommands: `simulate` runs one strategy against a baseline over
real tensor files or a synthetic activation stream and reports cycles
plus numerical error against the exact reference; `profile` writes
exponent histograms; `sweep` expands a config grid into one simulate run
per cell.  All outputs are deterministic functions of (config, inputs,
seed): rerunning a command reproduces its files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .crossbar import CrossbarTile, build_tile
from .fp16 import Fp16Value, decode, exact_dot
from .macro import STRATEGIES, MacroConfig, apply_strategy, run_mac
from .schedule import compare_latency
from .stats import BimodalSpec, error_stats, histogram, sample_bimodal
from .tensorio import TensorFormatError, load_tensor

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

# synthetic weights draw magnitudes around 2**-3, the usual shape of a
# trained weight tensor; a distinct seed stream keeps them independent
# of the activation draw
WEIGHT_SEED_OFFSET = 24251
WEIGHT_SPEC = {
    "p_zero": 0.0,
    "p_nearzero": 0.0,
    "center_mean": 12.0,
    "center_spread": 2.0,
    "p_nearmax": 0.0,
}

CSV_COLUMNS = [
    "tensor", "strategy", "baseline", "calls", "rows", "columns",
    "cycles_total", "cycles_mean", "baseline_cycles_mean", "reduction_mean",
    "clip_events", "dropped_bits", "trials",
    "abs_median", "abs_mean", "abs_p99",
    "rel_median", "rel_mean", "rel_p99", "zero_oracle_trials",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpcim",
        description="FP16 compute-in-memory macro simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one strategy against a baseline")
    sim.add_argument("tensors", nargs="*", help="input tensor files")
    sim.add_argument("--synthetic", action="store_true",
                     help="draw inputs from the synthetic activation model")
    sim.add_argument("--synthetic-spec", metavar="JSON",
                     help="inline JSON overriding the synthetic mixture")
    sim.add_argument("--calls", type=int, default=100,
                     help="synthetic macro calls to draw (default 100)")
    sim.add_argument("--config", metavar="PATH", help="macro config JSON")
    sim.add_argument("--strategy", choices=STRATEGIES, default="sea-dwa-fwi")
    sim.add_argument("--baseline", choices=STRATEGIES, default="mea-dwi")
    sim.add_argument("--weights", metavar="PATH",
                     help="weight tensor (rows x columns, row-major)")
    sim.add_argument("--columns", type=int, default=4,
                     help="synthetic weight columns (default 4)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, metavar="DIR")
    sim.set_defaults(func=cmd_simulate)

    prof = sub.add_parser("profile", help="exponent histograms per tensor")
    prof.add_argument("tensors", nargs="+", help="input tensor files")
    prof.add_argument("--out", required=True, metavar="DIR")
    prof.set_defaults(func=cmd_profile)

    swp = sub.add_parser("sweep", help="simulate over a config grid")
    swp.add_argument("tensors", nargs="*", help="input tensor files")
    swp.add_argument("--synthetic", action="store_true")
    swp.add_argument("--synthetic-spec", metavar="JSON")
    swp.add_argument("--calls", type=int, default=100)
    swp.add_argument("--config", metavar="PATH")
    swp.add_argument("--grid", required=True, metavar="PATH",
                     help='grid JSON: {"axes": {"sea.e_c": [15, 23], ...}}')
    swp.add_argument("--strategy", choices=STRATEGIES, default="sea-dwa-fwi")
    swp.add_argument("--baseline", choices=STRATEGIES, default="mea-dwi")
    swp.add_argument("--weights", metavar="PATH")
    swp.add_argument("--columns", type=int, default=4)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--out", required=True, metavar="DIR")
    swp.set_defaults(func=cmd_sweep)
    return parser


def _load_config(path: str | None) -> MacroConfig:
    if path is None:
        return MacroConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return MacroConfig.from_json(json.load(fh))


def _synthetic_spec(args: argparse.Namespace) -> BimodalSpec:
    if args.synthetic_spec:
        spec = BimodalSpec.from_json(json.loads(args.synthetic_spec))
    else:
        spec = BimodalSpec()
    return replace(spec, seed=args.seed)


def _gather_sources(
    args: argparse.Namespace, parser_error, config: MacroConfig
) -> tuple[list[tuple[str, list[Fp16Value]]], BimodalSpec | None]:
    if args.tensors and args.synthetic:
        parser_error("give tensor files or --synthetic, not both")
    if args.tensors:
        sources = []
        for path in args.tensors:
            values, meta = load_tensor(path)
            name = meta.layer or Path(path).stem
            sources.append((name, values))
        return sources, None
    if args.synthetic:
        if args.calls < 1:
            parser_error("--calls must be >= 1")
        spec = _synthetic_spec(args)
        values = sample_bimodal(spec, args.calls * config.rows)
        return [("synthetic", values)], spec
    parser_error("no inputs: give tensor files or --synthetic")
    raise AssertionError("unreachable")


def _weight_columns(args: argparse.Namespace, config: MacroConfig) -> list[list[Fp16Value]]:
    rows = config.rows
    if args.weights:
        values, _meta = load_tensor(args.weights)
        if not values or len(values) % rows:
            raise TensorFormatError(
                f"{args.weights}: weight count {len(values)} is not a multiple "
                f"of {rows} rows"
            )
        columns = len(values) // rows
        return [[values[r * columns + c] for r in range(rows)] for c in range(columns)]
    if args.columns < 1:
        raise ValueError("--columns must be >= 1")
    spec = BimodalSpec(**WEIGHT_SPEC, seed=args.seed + WEIGHT_SEED_OFFSET)
    flat = sample_bimodal(spec, rows * args.columns)
    return [
        [flat[r * args.columns + c] for r in range(rows)] for c in range(args.columns)
    ]


def _chunk_calls(values: Sequence[Fp16Value], rows: int) -> list[list[Fp16Value]]:
    calls = []
    for start in range(0, len(values), rows):
        chunk = list(values[start : start + rows])
        if len(chunk) < rows:
            chunk.extend([decode(0)] * (rows - len(chunk)))
        calls.append(chunk)
    if not calls:
        calls.append([decode(0)] * rows)
    return calls


def _layer_spread(values: Sequence[Fp16Value]) -> int:
    exps = [v.exponent for v in values if v.is_finite and not v.is_zero]
    return max(exps) - min(exps) if exps else 0


def simulate_source(
    name: str,
    values: Sequence[Fp16Value],
    weight_columns: Sequence[Sequence[Fp16Value]],
    tile: CrossbarTile,
    config: MacroConfig,
    strategy: str,
    baseline: str,
) -> dict:
    """One (tensor, strategy) record: cycles, reduction and exact-error
    statistics aggregated over every macro call of the source."""
    calls = _chunk_calls(values, config.rows)
    spread = _layer_spread(values)
    cfg_strategy = apply_strategy(config, strategy)
    cfg_baseline = apply_strategy(config, baseline)
    outputs: list[Fp16Value] = []
    oracles = []
    per_column_abs: list[list[float]] = [[] for _ in weight_columns]
    cycles_total = 0
    baseline_total = 0
    reductions = []
    clip_events = 0
    dropped_bits = 0
    for chunk in calls:
        run_s = run_mac(chunk, tile, cfg_strategy, spread)
        run_b = run_mac(chunk, tile, cfg_baseline, spread)
        cycles_total += run_s.cycles.input_cycles
        baseline_total += run_b.cycles.input_cycles
        clip_events += run_s.clip_events
        dropped_bits += run_s.dropped_bits
        if run_b.cycles.input_cycles > 0:
            reductions.append(compare_latency(run_s.cycles, run_b.cycles))
        for c, column in enumerate(weight_columns):
            exact = exact_dot(chunk, column).value()
            oracles.append(exact)
            outputs.append(run_s.outputs[c])
            out = run_s.outputs[c]
            err = abs(out.exact_value() - exact) if out.is_finite else None
            per_column_abs[c].append(float(err) if err is not None else float("inf"))
    report = error_stats(outputs, oracles, dropped_bits)
    n_calls = len(calls)
    return {
        "tensor": name,
        "strategy": strategy,
        "baseline": baseline,
        "calls": n_calls,
        "rows": config.rows,
        "columns": len(weight_columns),
        "cycles_total": cycles_total,
        "cycles_mean": cycles_total / n_calls,
        "baseline_cycles_mean": baseline_total / n_calls,
        "reduction_mean": sum(reductions) / len(reductions) if reductions else None,
        "clip_events": clip_events,
        "dropped_bits": dropped_bits,
        "error": report.to_json(),
        "per_column": [
            {
                "index": c,
                "abs_mean": sum(errs) / len(errs) if errs else 0.0,
            }
            for c, errs in enumerate(per_column_abs)
        ],
    }


def _record_to_row(record: dict) -> list[str]:
    err = record["error"]
    cells = {
        "tensor": record["tensor"],
        "strategy": record["strategy"],
        "baseline": record["baseline"],
        "calls": record["calls"],
        "rows": record["rows"],
        "columns": record["columns"],
        "cycles_total": record["cycles_total"],
        "cycles_mean": record["cycles_mean"],
        "baseline_cycles_mean": record["baseline_cycles_mean"],
        "reduction_mean": record["reduction_mean"],
        "clip_events": record["clip_events"],
        "dropped_bits": record["dropped_bits"],
        "trials": err["trials"],
        "abs_median": err["abs_median"],
        "abs_mean": err["abs_mean"],
        "abs_p99": err["abs_p99"],
        "rel_median": err["rel_median"],
        "rel_mean": err["rel_mean"],
        "rel_p99": err["rel_p99"],
        "zero_oracle_trials": err["zero_oracle_trials"],
    }
    return [_fmt(cells[col]) for col in CSV_COLUMNS]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_simulate(args: argparse.Namespace) -> int:
    parser_error = _make_error(args)
    config = _load_config(args.config)
    sources, spec = _gather_sources(args, parser_error, config)
    weight_columns = _weight_columns(args, config)
    tile = build_tile(weight_columns, config.rows, config.w_s)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = [
        simulate_source(name, values, weight_columns, tile, config,
                        args.strategy, args.baseline)
        for name, values in sources
    ]
    report = {
        "seed": args.seed,
        "strategy": args.strategy,
        "baseline": args.baseline,
        "config": config.to_json(),
        "synthetic_spec": spec.to_json() if spec else None,
        "sources": records,
    }
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_csv(
        out_dir / "results.csv", CSV_COLUMNS, [_record_to_row(r) for r in records]
    )
    for record in records:
        reduction = record["reduction_mean"]
        shown = f"{reduction:.4f}" if reduction is not None else "n/a"
        print(
            f"{record['tensor']}: {args.strategy} {record['cycles_mean']:.2f} "
            f"cycles/call vs {args.baseline} {record['baseline_cycles_mean']:.2f}, "
            f"reduction {shown}"
        )
    return EXIT_OK


def cmd_profile(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.tensors:
        values, meta = load_tensor(path)
        hist = histogram(values)
        shares = hist.group_fractions()
        rows = [[str(e), str(count)] for e, count in enumerate(hist.counts)]
        rows.append(["zero", str(hist.zero_count)])
        rows.append(["nonfinite", str(hist.nonfinite_count)])
        for group, share in shares.items():
            rows.append([f"{group.value}_fraction", repr(share)])
        name = meta.layer or Path(path).stem
        _write_csv(out_dir / f"{Path(path).stem}_hist.csv", ["bin", "count"], rows)
        print(f"{name}: {hist.total} values, {hist.zero_count} zeros")
    return EXIT_OK


def _set_config_path(config_json: dict, path: str, value) -> None:
    parts = path.split(".")
    node = config_json
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ValueError(f"unknown config path {path!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ValueError(f"unknown config path {path!r}")
    node[parts[-1]] = value


def cmd_sweep(args: argparse.Namespace) -> int:
    parser_error = _make_error(args)
    base_config = _load_config(args.config)
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid = json.load(fh)
    axes = grid.get("axes") if isinstance(grid, dict) else None
    if not isinstance(axes, dict) or not axes:
        raise ValueError(f"{args.grid}: grid must carry a non-empty 'axes' object")
    for key, values in axes.items():
        if not isinstance(values, list) or not values:
            raise ValueError(f"{args.grid}: axis {key!r} must be a non-empty list")
    sources, _spec = _gather_sources(args, parser_error, base_config)
    weight_columns = _weight_columns(args, base_config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    axis_names = list(axes.keys())
    header = ["cell"] + axis_names + CSV_COLUMNS
    rows_out = []
    for cell_index, combo in enumerate(itertools.product(*axes.values())):
        cfg_json = base_config.to_json()
        for key, value in zip(axis_names, combo):
            _set_config_path(cfg_json, key, value)
        config = MacroConfig.from_json(cfg_json)
        tile = build_tile(weight_columns, config.rows, config.w_s)
        for name, values in sources:
            record = simulate_source(
                name, values, weight_columns, tile, config,
                args.strategy, args.baseline,
            )
            rows_out.append(
                [str(cell_index)]
                + [json.dumps(v) for v in combo]
                + _record_to_row(record)
            )
    _write_csv(out_dir / "sweep.csv", header, rows_out)
    print(f"swept {cell_index + 1} cells over {axis_names}")
    return EXIT_OK


def _make_error(args: argparse.Namespace):
    def error(message: str):
        print(f"usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)

    return error


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (TensorFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
