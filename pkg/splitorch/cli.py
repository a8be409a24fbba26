"""Command line interface

    splitorch run <scenario> [--mode static|adaptive] [--seed N] [--out DIR]
    splitorch sweep <scenario> --bandwidths 20,50,100,200 [--jobs N]
    splitorch solve <scenario> [--at T]

`<scenario>` is a path to a scenario document or the name of a bundled one
(e.g. `urban_5g_mec`).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .orchestrator import Mode
from .report import (
    read_summary_csv,
    render_svg,
    to_jsonable,
    write_events_jsonl,
    write_kpi_csv,
    write_requests_csv,
    write_summary_csv,
)
from .scenario import ScenarioConfig, resolve_config
from .simulator import SimulationResult, compare_static_adaptive, run_scenario
from .solver import split_revision
from .utils import SplitorchException, setup_logging

DEFAULT_SWEEP = (20.0, 50.0, 100.0, 200.0)


def _bandwidths(text: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}"
        ) from None
    if not values or any(bw <= 0 for bw in values):
        raise argparse.ArgumentTypeError("bandwidths must be positive")
    return values


def _seed(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        seed = -1
    if seed < 0:
        raise argparse.ArgumentTypeError(
            f"expected a non-negative integer, got {text!r}"
        )
    return seed


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "config", help="Scenario document, or the name of a bundled scenario"
    )
    common.add_argument("--seed", type=_seed, help="Seed of the arrival process")
    common.add_argument(
        "--out", type=Path, default=Path("out"), help="Output directory"
    )
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--l-max-ms", type=float, help="Latency threshold")
    common.add_argument("--u-max", type=float, help="Utilization threshold")
    common.add_argument("--b-min-mbps", type=float, help="Bandwidth threshold")
    common.add_argument("--t-cool-s", type=float, help="Cool-down period")
    common.add_argument(
        "--max-segments", type=int, help="Largest number of segments to consider"
    )
    common.add_argument("--duration-s", type=float, help="Simulated time")
    common.add_argument(
        "--debug", action="store_true", help="Show trigger and solver details"
    )

    parser = argparse.ArgumentParser(
        prog="splitorch",
        description="Simulate and optimize adaptive split inference of "
        "foundation models across edge nodes and the cloud.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", parents=[common], help="Simulate one scenario"
    )
    run.set_defaults(func=cmd_run)

    sweep = commands.add_parser(
        "sweep",
        parents=[common],
        help="Compare static and adaptive modes over backhaul bandwidths",
    )
    sweep.add_argument(
        "--bandwidths",
        type=_bandwidths,
        default=list(DEFAULT_SWEEP),
        help="Comma-separated backhaul bandwidths in Mb/s",
    )
    sweep.add_argument(
        "--jobs", type=int, default=1, help="Number of worker processes"
    )
    sweep.set_defaults(func=cmd_sweep)

    solve = commands.add_parser(
        "solve",
        parents=[common],
        help="Print the optimal split and placement as JSON",
    )
    solve.add_argument(
        "--at", type=float, default=0.0, help="Time of the system state to solve"
    )
    solve.set_defaults(func=cmd_solve)
    return parser


def load_scenario(args: argparse.Namespace) -> ScenarioConfig:
    return resolve_config(args.config).override(
        seed=args.seed,
        mode=args.mode,
        l_max_ms=args.l_max_ms,
        u_max=args.u_max,
        b_min_mbps=args.b_min_mbps,
        t_cool_s=args.t_cool_s,
        max_segments=args.max_segments,
        duration_s=args.duration_s,
    )


def write_result(out: Path, result: SimulationResult) -> None:
    write_requests_csv(out / "requests.csv", result.requests)
    write_kpi_csv(out / "kpi.csv", result.windows)
    write_events_jsonl(out / "events.jsonl", result.events)


def _ms(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.1f}"


def cmd_run(args: argparse.Namespace) -> int:
    config = load_scenario(args)
    result = run_scenario(config)
    write_result(args.out, result)

    steady = result.steady_state()
    applied = sum(1 for event in result.events if event.applied)
    print(f"{config.name} ({result.mode.value}, seed {result.seed})")
    print(f"  requests:     {len(result.requests)} ({steady.dropped} shed "
          "after warm-up)")
    print(f"  mean latency: {_ms(steady.mean_latency_ms)} ms")
    print(f"  p95 latency:  {_ms(steady.p95_latency_ms)} ms")
    print(f"  throughput:   {steady.throughput_rps:.2f} req/s")
    print(f"  max util:     {steady.max_utilization:.3f}")
    print(f"  reconfigured: {applied} time(s)")
    print(f"  written to:   {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_scenario(args)
    comparison = compare_static_adaptive(config, args.bandwidths, jobs=args.jobs)

    out: Path = args.out
    for (bw, mode), result in sorted(
        comparison.results.items(), key=lambda item: (item[0][0], item[0][1].value)
    ):
        write_result(out / f"{mode.value}_{bw:g}mbps", result)
    summary = write_summary_csv(out / "summary.csv", comparison.rows)
    (out / "latency_vs_bandwidth.svg").write_text(
        render_svg(read_summary_csv(summary))
    )

    l_max = config.thresholds.l_max_ms
    print(
        f"{'Mb/s':>8} {'static ms':>10} {'adaptive ms':>12} {'delta %':>8} "
        f"{'tput x':>7} {'max util':>9} {'reconf':>7}"
    )
    for row in comparison.rows:
        delta = "-" if row.delta_pct is None else f"{row.delta_pct:+.1f}"
        ratio = "-" if row.throughput_ratio is None else f"{row.throughput_ratio:.2f}"
        print(
            f"{row.bandwidth_mbps:>8g} {_ms(row.static_latency_ms):>10} "
            f"{_ms(row.adaptive_latency_ms):>12} {delta:>8} {ratio:>7} "
            f"{row.max_gpu_util:>9.3f} {row.reconfig_count:>7}"
        )
    for row in comparison.rows:
        print(
            f"{row.bandwidth_mbps:g} Mb/s within {l_max:g} ms: "
            f"static {'yes' if row.static_meets_l_max else 'no'}, "
            f"adaptive {'yes' if row.adaptive_meets_l_max else 'no'}"
        )
    print(f"written to: {out}")
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    config = load_scenario(args)
    world = config.topology.snapshot(args.at, config.arrival_rate, config.workload)
    scheme, placement, cost = split_revision(
        config.model,
        config.max_segments,
        world,
        config.weights,
        params=config.calibration.cost_params,
    )
    doc = {
        "scenario": config.name,
        "t": to_jsonable(float(args.at)),
        "scheme": to_jsonable(scheme),
        "placement": to_jsonable(placement),
        "cost": to_jsonable(cost),
    }
    print(json.dumps(doc, indent=2))
    return 0


def main(argv: Sequence[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(debug=args.debug or None)
    try:
        return args.func(args)
    except SplitorchException as exc:
        print(f"splitorch: error: {exc}", file=sys.stderr)
        return 1
