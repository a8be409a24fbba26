"""Fixed-timestep simulation of a deployed split model

Time advances in ticks of `tick_s`. Each tick draws a Poisson number of
requests, evaluates their latency analytically from the state of the system
at that tick, and admits them into the pipeline when its bottleneck stage is
free. Every `monitor_interval_s` the monitor closes its window and, in
adaptive mode, the orchestrator runs one cycle.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import (
    TYPE_CHECKING,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .cost import latency
from .monitor import Monitor, update_ewma
from .orchestrator import (
    Mode,
    ReconfigEvent,
    applied_events,
    initial_deployment,
    orchestration_step,
)

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RequestRecord:
    """One inference request

    Attributes:
        request_id: Position in arrival order
        arrival_s: Arrival time
        workload: Workload multiplier of the request
        completed: Whether the pipeline admitted it
        latency_ms: End-to-end latency, `None` for shed requests
        epoch: Configuration epoch that served it
        penalized_by_migration: Whether it waited for a weight transfer
        max_utilization: Highest node utilization at arrival, capped
    """

    request_id: int
    arrival_s: float
    workload: float
    completed: bool
    latency_ms: Optional[float]
    epoch: int
    penalized_by_migration: bool
    max_utilization: float


@dataclass(frozen=True)
class KpiWindow:
    """KPIs aggregated over `[start_s, end_s)`

    Every field derives from the request records, the event log and the
    monitoring cycles that fall into the window.
    """

    start_s: float
    end_s: float
    arrivals: int
    completed: int
    dropped: int
    penalized: int
    mean_latency_ms: Optional[float]
    p95_latency_ms: Optional[float]
    ewma_latency_ms: Optional[float]
    throughput_rps: float
    max_utilization: float
    mean_utilization: float
    reconfig_count: int
    orchestration_overhead_ms: float
    throughput_ratio: Optional[float] = None


@dataclass(frozen=True)
class SteadyState:
    """Aggregates over the requests arriving after the warm-up"""

    mean_latency_ms: Optional[float]
    p95_latency_ms: Optional[float]
    throughput_rps: float
    max_utilization: float
    mean_utilization: float
    completed: int
    dropped: int


@dataclass(frozen=True)
class SimulationResult:
    """Everything a scenario run produces

    Attributes:
        scenario: Name of the scenario
        mode: Static or adaptive
        seed: Seed of the arrival generator
        bandwidth_mbps: Backhaul override, `None` when the traces applied
        duration_s: Simulated time
        warmup_s: Start of the steady state
        requests: Every generated request, in arrival order
        windows: KPI windows
        events: The reconfiguration log
        cycles: Times of the orchestration cycles that ran
    """

    scenario: str
    mode: Mode
    seed: int
    bandwidth_mbps: Optional[float]
    duration_s: float
    warmup_s: float
    requests: Tuple[RequestRecord, ...]
    windows: Tuple[KpiWindow, ...]
    events: Tuple[ReconfigEvent, ...]
    cycles: Tuple[float, ...] = ()

    @property
    def completed(self) -> int:
        return sum(1 for req in self.requests if req.completed)

    @property
    def throughput_rps(self) -> float:
        return self.completed / self.duration_s

    def steady_state(self, warmup_s: Optional[float] = None) -> SteadyState:
        """Aggregate the requests arriving at or after `warmup_s`"""
        if warmup_s is None:
            warmup_s = self.warmup_s
        records = [req for req in self.requests if req.arrival_s >= warmup_s]
        lat = _latencies(records)
        util = np.array([req.max_utilization for req in records], dtype=float)
        span = self.duration_s - warmup_s
        completed = len(lat)
        return SteadyState(
            mean_latency_ms=float(np.mean(lat)) if completed else None,
            p95_latency_ms=float(np.percentile(lat, 95)) if completed else None,
            throughput_rps=completed / span if span > 0 else 0.0,
            max_utilization=float(util.max()) if util.size else 0.0,
            mean_utilization=float(util.mean()) if util.size else 0.0,
            completed=completed,
            dropped=len(records) - completed,
        )


@dataclass(frozen=True)
class ComparisonRow:
    """Static against adaptive at one backhaul bandwidth

    `throughput_ratio` compares completed requests over the whole run,
    `max_gpu_util` is the steady-state peak under adaptive orchestration.
    """

    bandwidth_mbps: float
    static_latency_ms: Optional[float]
    adaptive_latency_ms: Optional[float]
    delta_pct: Optional[float]
    throughput_ratio: Optional[float]
    max_gpu_util: float
    reconfig_count: int
    static_meets_l_max: bool
    adaptive_meets_l_max: bool


@dataclass(frozen=True)
class Comparison:
    rows: Tuple[ComparisonRow, ...]
    results: Dict[Tuple[float, Mode], SimulationResult]


def _latencies(records: Iterable[RequestRecord]) -> np.ndarray:
    return np.array(
        [req.latency_ms for req in records if req.completed], dtype=float
    )


def ewma_at(
    records: Sequence[RequestRecord],
    until_s: float,
    interval_s: float,
    smoothing: float,
) -> Optional[float]:
    """The latency EWMA the monitor holds after its cycle at `until_s`

    Completed requests are grouped into monitoring windows of `interval_s`
    and each window mean is folded in order; empty windows are skipped.
    """
    buckets: Dict[int, List[float]] = {}
    last = int(round(until_s / interval_s))
    for req in records:
        if not req.completed:
            continue
        bucket = int(req.arrival_s // interval_s)
        if bucket < last:
            buckets.setdefault(bucket, []).append(req.latency_ms)

    ewma = None
    for bucket in sorted(buckets):
        ewma = update_ewma(ewma, float(np.mean(buckets[bucket])), smoothing)
    return ewma


def aggregate_windows(
    records: Sequence[RequestRecord],
    events: Sequence[ReconfigEvent],
    cycles: Sequence[float],
    duration_s: float,
    span_s: float,
    monitor_interval_s: float,
    smoothing: float,
    overhead_per_cycle_ms: float,
) -> Tuple[KpiWindow, ...]:
    """Aggregate request records into KPI windows of `span_s`

    The last window is shorter when `duration_s` is not a multiple of
    `span_s`.
    """
    count = int(np.ceil(duration_s / span_s - 1e-9))
    by_window: List[List[RequestRecord]] = [[] for _ in range(count)]
    for req in records:
        by_window[min(int(req.arrival_s // span_s), count - 1)].append(req)

    applied = applied_events(events)
    windows = []
    for i, window_records in enumerate(by_window):
        start = i * span_s
        end = min((i + 1) * span_s, duration_s)
        lat = _latencies(window_records)
        util = np.array([req.max_utilization for req in window_records], dtype=float)
        n_cycles = sum(1 for t in cycles if start <= t < end)
        windows.append(
            KpiWindow(
                start_s=start,
                end_s=end,
                arrivals=len(window_records),
                completed=len(lat),
                dropped=len(window_records) - len(lat),
                penalized=sum(req.penalized_by_migration for req in window_records),
                mean_latency_ms=float(np.mean(lat)) if lat.size else None,
                p95_latency_ms=float(np.percentile(lat, 95)) if lat.size else None,
                ewma_latency_ms=ewma_at(records, end, monitor_interval_s, smoothing),
                throughput_rps=len(lat) / (end - start),
                max_utilization=float(util.max()) if util.size else 0.0,
                mean_utilization=float(util.mean()) if util.size else 0.0,
                reconfig_count=sum(1 for ev in applied if start <= ev.t < end),
                orchestration_overhead_ms=n_cycles * overhead_per_cycle_ms,
            )
        )
    return tuple(windows)


def run_scenario(
    config: "ScenarioConfig",
    seed: Optional[int] = None,
    mode: Optional[Mode] = None,
    bandwidth_mbps: Optional[float] = None,
) -> SimulationResult:
    """Simulate a scenario

    Args:
        config: The scenario
        seed: Overrides the scenario's seed
        mode: Overrides the scenario's mode
        bandwidth_mbps: Pins every backhaul link to this bandwidth

    Raises:
        NoFeasiblePlacement: When the baseline is infeasible at t = 0
    """
    seed = config.seed if seed is None else seed
    mode = Mode(config.mode if mode is None else mode)
    cal = config.calibration
    params = cal.cost_params
    policy = cal.migration_policy

    topology = config.topology
    if bandwidth_mbps is not None:
        topology = topology.with_backhaul_bandwidth(bandwidth_mbps)
    rate, workload = config.arrival_rate, config.workload

    logger.info(
        "Running %s in %s mode (seed %d%s)",
        config.name,
        mode.value,
        seed,
        "" if bandwidth_mbps is None else f", backhaul {bandwidth_mbps:g} Mb/s",
    )
    orch = initial_deployment(
        config.model,
        config.baseline.boundaries,
        config.baseline.placement,
        topology.snapshot(0.0, rate, workload),
        mode,
    )
    monitor = Monitor(cal.monitor_interval_s, cal.ewma_smoothing, params)
    rng = np.random.default_rng(seed)

    n_ticks = int(round(config.duration_s / cal.tick_s))
    ticks_per_cycle = max(1, int(round(cal.monitor_interval_s / cal.tick_s)))
    busy_until = float("-inf")
    records: List[RequestRecord] = []
    cycles: List[float] = []
    warned_capped = False

    for tick in range(n_ticks):
        t = round(tick * cal.tick_s, 9)
        world = topology.snapshot(t, rate, workload)

        if tick % ticks_per_cycle == 0:
            env = monitor.collect(world, orch.scheme, orch.placement)
            if mode is Mode.ADAPTIVE:
                orch, _ = orchestration_step(
                    orch,
                    env,
                    world,
                    config.weights,
                    config.thresholds,
                    config.max_segments,
                    params,
                    policy,
                )
                cycles.append(t)

        lat = latency(orch.scheme, orch.placement, world, params)
        if lat.capped and not warned_capped:
            logger.warning(
                "t=%.1f utilization of %s capped at %g",
                t,
                ", ".join(lat.capped_nodes),
                params.rho_cap,
            )
            warned_capped = True
        service_s = lat.bottleneck_ms / 1000.0
        max_util = min(max(lat.utilization.values()), params.rho_cap)

        n_arrivals = rng.poisson(rate * cal.tick_s)
        offsets = np.sort(rng.uniform(0.0, cal.tick_s, n_arrivals))
        for offset in offsets:
            arrival = t + float(offset)
            if arrival < busy_until:
                records.append(
                    RequestRecord(
                        len(records), arrival, workload, False, None,
                        orch.epoch, False, max_util,
                    )
                )
                continue
            busy_until = arrival + service_s
            latency_ms = lat.total_ms
            penalized = arrival < orch.ready_at
            if penalized:
                latency_ms += (orch.ready_at - arrival) * 1000.0
            monitor.observe(latency_ms)
            records.append(
                RequestRecord(
                    len(records), arrival, workload, True, latency_ms,
                    orch.epoch, penalized, max_util,
                )
            )

    windows = aggregate_windows(
        records,
        orch.events,
        cycles,
        config.duration_s,
        cal.kpi_window_s,
        cal.monitor_interval_s,
        cal.ewma_smoothing,
        cal.monitoring_overhead_ms,
    )
    result = SimulationResult(
        scenario=config.name,
        mode=mode,
        seed=seed,
        bandwidth_mbps=bandwidth_mbps,
        duration_s=config.duration_s,
        warmup_s=cal.warmup_s,
        requests=tuple(records),
        windows=windows,
        events=orch.events,
        cycles=tuple(cycles),
    )
    logger.info(
        "Finished %s (%s): %d request(s), %d completed, %d reconfiguration(s)",
        config.name,
        mode.value,
        len(records),
        result.completed,
        len(applied_events(orch.events)),
    )
    return result


def _run_cell(cell: Tuple["ScenarioConfig", float, Mode]) -> SimulationResult:
    config, bandwidth, mode = cell
    return run_scenario(config, mode=mode, bandwidth_mbps=bandwidth)


def _with_ratio(
    adaptive: SimulationResult, static: SimulationResult
) -> SimulationResult:
    windows = tuple(
        replace(
            window,
            throughput_ratio=(
                window.throughput_rps / base.throughput_rps
                if base.throughput_rps > 0
                else None
            ),
        )
        for window, base in zip(adaptive.windows, static.windows)
    )
    return replace(adaptive, windows=windows)


def compare_static_adaptive(
    config: "ScenarioConfig",
    sweep: Sequence[float],
    jobs: int = 1,
) -> Comparison:
    """Run both modes at every swept backhaul bandwidth with the same seed

    Args:
        config: The scenario
        sweep: Backhaul bandwidths in Mb/s
        jobs: Number of worker processes, cells run sequentially with 1

    Raises:
        ValueError: When the sweep is empty
    """
    sweep = [float(bw) for bw in sweep]
    if not sweep:
        raise ValueError("The bandwidth sweep is empty.")

    cells = [(config, bw, mode) for bw in sweep for mode in Mode]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(_run_cell, cells))
    else:
        outcomes = [_run_cell(cell) for cell in cells]

    results: Dict[Tuple[float, Mode], SimulationResult] = {
        (bw, mode): result for (_, bw, mode), result in zip(cells, outcomes)
    }
    l_max = config.thresholds.l_max_ms
    rows = []
    for bw in sweep:
        static = results[bw, Mode.STATIC]
        adaptive = results[bw, Mode.ADAPTIVE] = _with_ratio(
            results[bw, Mode.ADAPTIVE], static
        )
        static_ss = static.steady_state()
        adaptive_ss = adaptive.steady_state()
        s_lat, a_lat = static_ss.mean_latency_ms, adaptive_ss.mean_latency_ms
        rows.append(
            ComparisonRow(
                bandwidth_mbps=bw,
                static_latency_ms=s_lat,
                adaptive_latency_ms=a_lat,
                delta_pct=(
                    100.0 * (a_lat - s_lat) / s_lat
                    if s_lat and a_lat is not None
                    else None
                ),
                throughput_ratio=(
                    adaptive.completed / static.completed
                    if static.completed
                    else None
                ),
                max_gpu_util=adaptive_ss.max_utilization,
                reconfig_count=len(applied_events(adaptive.events)),
                static_meets_l_max=s_lat is not None and s_lat <= l_max,
                adaptive_meets_l_max=a_lat is not None and a_lat <= l_max,
            )
        )
        logger.info(
            "%g Mb/s: static %s ms, adaptive %s ms",
            bw,
            "-" if s_lat is None else f"{s_lat:.1f}",
            "-" if a_lat is None else f"{a_lat:.1f}",
        )
    return Comparison(tuple(rows), results)
