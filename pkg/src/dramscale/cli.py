"""Command line interface.

    dramscale run --config cfg.ini [--mode timescaled|notimescale|reference]
                  [--seed N] [--out report.json]
    dramscale profile --config cfg.ini --out heatmap.csv [--rows N]
    dramscale sweep --config cfg.ini --workloads dir [--out results.csv]
    dramscale compare a.json b.json

Exit codes: 0 success, 2 configuration error, 3 simulation protocol error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config
from .device import generate_profile, RowData
from .engine import CommandEngine
from .errors import ConfigError, DramScaleError, ParseError, ProtocolError
from .harness import compare, run, sweep_csv
from .trcd import heatmap_csv, profile_chip, row_table_from_profiling


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dramscale")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--mode", choices=("timescaled", "notimescale", "reference"))
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="write the JSON report here")

    p_prof = sub.add_parser("profile", help="profile the modeled chip")
    p_prof.add_argument("--config", required=True)
    p_prof.add_argument("--out", required=True, help="heatmap CSV path")
    p_prof.add_argument("--rows", type=int, help="limit rows per bank")

    p_sweep = sub.add_parser("sweep", help="run every workload file in a directory")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--workloads", required=True)
    p_sweep.add_argument("--out", help="write CSV here (stdout otherwise)")

    p_cmp = sub.add_parser("compare", help="compare two JSON reports")
    p_cmp.add_argument("report_a")
    p_cmp.add_argument("report_b")
    return parser


def _cmd_run(args) -> int:
    exp = load_config(args.config)
    if args.mode:
        exp = replace(exp, mode=args.mode)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    report = run(exp)
    sys.stdout.write(report.text_summary())
    if args.out:
        Path(args.out).write_text(report.to_json())
    return 0


def _cmd_profile(args) -> int:
    exp = load_config(args.config)
    seed = exp.profile_seed if exp.profile_seed is not None else exp.seed
    profile = generate_profile(exp.dram, exp.strong_fraction,
                               exp.clonable_success_rate, seed,
                               exp.subarray_rows)
    engine = CommandEngine(exp.dram, RowData(exp.dram, seed=exp.seed), profile)
    per_line = profile_chip(engine, rows=args.rows)
    rows = row_table_from_profiling(per_line)
    Path(args.out).write_text(heatmap_csv(rows, exp.dram.banks_per_group))
    sys.stdout.write(f"profiled {len(rows)} rows -> {args.out}\n")
    return 0


def _cmd_sweep(args) -> int:
    from .harness import run as run_one
    base = load_config(args.config)
    directory = Path(args.workloads)
    if not directory.is_dir():
        raise ConfigError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir()
                   if p.suffix in (".ini", ".cfg"))
    if not files:
        raise ConfigError(f"no workload files in {directory}")
    reports = {}
    specs = {}
    for path in files:
        exp = load_config(path, base=load_config(args.config))
        name = exp.workload.name or path.stem
        specs[name] = exp
        reports[name] = run_one(exp)
    rows = []
    for name, exp in specs.items():
        report = reports[name]
        row = {
            "name": name,
            "emulated_cycles": report.emulated_cycles,
            "mean_latency_cycles": report.mean_latency_cycles,
            "avg_cycles_per_load": report.avg_cycles_per_load,
        }
        if exp.workload.baseline:
            if exp.workload.baseline not in reports:
                raise ConfigError(f"baseline {exp.workload.baseline!r} for "
                                  f"{name!r} not in sweep")
            row["speedup"] = (reports[exp.workload.baseline].emulated_cycles
                              / max(1, report.emulated_cycles))
        rows.append(row)
    text = sweep_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_compare(args) -> int:
    with open(args.report_a) as fa, open(args.report_b) as fb:
        a = json.load(fa)
        b = json.load(fb)
    result = compare(a, b)
    sys.stdout.write(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "profile": _cmd_profile,
        "sweep": _cmd_sweep,
        "compare": _cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ProtocolError, DramScaleError) as exc:
        sys.stderr.write(f"simulation error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
