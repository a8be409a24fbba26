"""The monitoring, trigger and reconfiguration cycle

At each monitoring cycle the orchestrator evaluates the trigger. When it
fires, it first tries a placement migration: the optimal placement of the
current split scheme. If that placement is not predicted to clear every
fired condition, it escalates to a full split revision. A new configuration
is applied (broadcast) only when it differs from the current one; applying
it costs a weight transfer that delays the requests arriving meanwhile.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Collection, Dict, Optional, Sequence, Set, Tuple

from .cost import (
    DEFAULT_PARAMS,
    CostBreakdown,
    CostParams,
    CostWeights,
    SystemState,
)
from .model import ModelProfile, SplitScheme, make_split
from .monitor import (
    BANDWIDTH,
    CAUSES,
    LATENCY,
    UTILIZATION,
    EnvironmentState,
    TriggerReport,
    TriggerThresholds,
    should_reconfigure,
)
from .solver import Placement, check_feasible, solve_placement, split_revision
from .utils import NEG_INF, NoFeasiblePlacement, NoLink

logger = logging.getLogger(__name__)

MIGRATION = "migration"
RESPLIT = "resplit"
SUPPRESSED = "suppressed"
NOOP = "no-op"
FAILED = "failed"


class Mode(str, Enum):
    """Static mode keeps the baseline forever, adaptive mode runs the cycle"""

    STATIC = "static"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class MigrationPolicy:
    """Cost model of applying a new configuration

    Attributes:
        overhead_ms: Fixed orchestration overhead per applied change
        weight_transfer_mbps: When set, weights are staged over a dedicated
            channel of this rate instead of the slowest involved link
    """

    overhead_ms: float = 10.0
    weight_transfer_mbps: Optional[float] = None

    def __post_init__(self) -> None:
        if self.overhead_ms < 0:
            raise ValueError("overhead_ms must be >= 0.")
        if self.weight_transfer_mbps is not None and self.weight_transfer_mbps <= 0:
            raise ValueError("weight_transfer_mbps must be > 0.")


@dataclass(frozen=True)
class ReconfigEvent:
    """One entry of the reconfiguration log

    Attributes:
        t: When the cycle ran
        kind: migration, resplit, suppressed, no-op or failed
        causes: The trigger conditions that held
        old_boundaries: Boundaries before the cycle
        new_boundaries: Boundaries after the cycle
        old_placement: Placement before the cycle
        new_placement: Placement after the cycle
        applied: Whether the configuration changed
        epoch: Configuration epoch after the cycle
        migration_bytes: Weight bytes moved to apply the change
        migration_delay_ms: Time until the new configuration is ready
        migration_total: Objective of the best placement of the old scheme
        migration_cleared: Whether that placement cleared the fired
            conditions, `None` when it was not evaluated
        new_total: Objective of the chosen configuration
        detail: Free text, e.g. why a cycle failed
    """

    t: float
    kind: str
    causes: Tuple[str, ...] = ()
    old_boundaries: Tuple[int, ...] = ()
    new_boundaries: Tuple[int, ...] = ()
    old_placement: Tuple[str, ...] = ()
    new_placement: Tuple[str, ...] = ()
    applied: bool = False
    epoch: int = 0
    migration_bytes: float = 0.0
    migration_delay_ms: float = 0.0
    migration_total: Optional[float] = None
    migration_cleared: Optional[bool] = None
    new_total: Optional[float] = None
    detail: str = ""


@dataclass(frozen=True)
class OrchestratorState:
    """The deployed configuration and the orchestration history

    Attributes:
        scheme: The deployed split scheme
        placement: The deployed placement, one node per segment
        mode: Static or adaptive
        t_last: Time of the last applied reconfiguration
        epoch: Incremented by every applied reconfiguration
        ready_at: When the weight transfer of the last change completes
        events: The reconfiguration log
    """

    scheme: SplitScheme
    placement: Placement
    mode: Mode = Mode.ADAPTIVE
    t_last: float = NEG_INF
    epoch: int = 0
    ready_at: float = NEG_INF
    events: Tuple[ReconfigEvent, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.placement.k != self.scheme.k:
            raise ValueError(
                f"Placement assigns {self.placement.k} segment(s), scheme "
                f"has {self.scheme.k}."
            )

    @property
    def profile(self) -> ModelProfile:
        return self.scheme.profile

    @property
    def boundaries(self) -> Tuple[int, ...]:
        return self.scheme.boundaries

    def log(self, event: ReconfigEvent) -> "OrchestratorState":
        return replace(self, events=(*self.events, event))


def initial_deployment(
    profile: ModelProfile,
    boundaries: Sequence[int],
    placement: Sequence[str],
    world: SystemState,
    mode: Mode = Mode.ADAPTIVE,
    trusted: Collection[str] = None,
) -> OrchestratorState:
    """Deploy the baseline split and mapping

    Args:
        profile: The model
        boundaries: Baseline cut positions
        placement: Baseline host of each segment
        world: The system state at deployment time
        mode: Static or adaptive
        trusted: Trusted node set, defaults to the topology's

    Raises:
        InvalidBoundary: When the boundaries are invalid
        NoFeasiblePlacement: When the baseline violates a constraint
    """
    scheme = make_split(profile, boundaries)
    placement = Placement(tuple(placement))
    if placement.k != scheme.k:
        raise NoFeasiblePlacement(
            f"Baseline placement assigns {placement.k} segment(s), the "
            f"scheme has {scheme.k}."
        )
    report = check_feasible(scheme, placement, world, trusted)
    if not report.feasible:
        raise NoFeasiblePlacement(
            "Baseline deployment is infeasible: "
            + " ".join(v.detail for v in report.violated)
        )
    logger.info(
        "Deployed %s as %s on %s (%s mode)",
        profile.name,
        list(scheme.boundaries),
        placement,
        Mode(mode).value,
    )
    return OrchestratorState(scheme, placement, Mode(mode))


def clears(
    scheme: SplitScheme,
    placement: Placement,
    cost: CostBreakdown,
    world: SystemState,
    causes: Collection[str],
    thresholds: TriggerThresholds,
) -> bool:
    """Whether a candidate configuration is predicted to clear every fired
    condition

    - latency: predicted latency within `l_max_ms`
    - utilization: predicted utilization of every hosting node within `u_max`
    - bandwidth: every link carrying a boundary has at least `b_min_mbps`
    """
    if LATENCY in causes and cost.latency_ms > thresholds.l_max_ms:
        return False
    if UTILIZATION in causes:
        rho = cost.latency.utilization
        if max(rho[host] for host in placement.hosts()) > thresholds.u_max:
            return False
    if BANDWIDTH in causes:
        hosts = placement.assignment
        for a, b in zip(hosts, hosts[1:]):
            if a != b and world.bandwidth(a, b) < thresholds.b_min_mbps:
                return False
    return True


def migration_cost(
    old_scheme: SplitScheme,
    old_placement: Placement,
    new_scheme: SplitScheme,
    new_placement: Placement,
    world: SystemState,
    policy: MigrationPolicy = MigrationPolicy(),
) -> Tuple[float, float]:
    """Bytes to move and delay until a new configuration is ready

    A new segment moves when its host changed, or when its layer range did
    not exist in the old scheme. Weights travel over the slowest link
    between old and new hosts of the moved layers, or over the dedicated
    staging channel of the policy.

    Returns:
        `(migration_bytes, migration_delay_ms)`

    Raises:
        NoLink: When weights would have to travel between unlinked nodes
    """
    old_host_of_layer = [
        host
        for seg, host in zip(old_scheme.segments, old_placement)
        for _ in range(seg.num_layers)
    ]
    old_host_of_range = dict(zip(old_scheme.ranges, old_placement))

    moved_bytes = 0.0
    pairs: Set[Tuple[str, str]] = set()
    for seg, host in zip(new_scheme.segments, new_placement):
        if old_host_of_range.get(seg.layer_range) == host:
            continue
        moved_bytes += seg.load_mem
        for layer in range(*seg.layer_range):
            if old_host_of_layer[layer] != host:
                pairs.add((old_host_of_layer[layer], host))

    if moved_bytes == 0:
        return 0.0, policy.overhead_ms

    if policy.weight_transfer_mbps is not None:
        rate = policy.weight_transfer_mbps
    elif pairs:
        rate = min(world.bandwidth(a, b) for a, b in sorted(pairs))
    else:
        # re-partitioned in place
        rate = None

    transfer_ms = 0.0 if rate is None else moved_bytes * 8.0 / (rate * 1e3)
    return moved_bytes, transfer_ms + policy.overhead_ms


def _causes(report: TriggerReport) -> Tuple[str, ...]:
    return tuple(c for c in CAUSES if c in report.causes)


def orchestration_step(
    state: OrchestratorState,
    env: EnvironmentState,
    world: SystemState,
    weights: CostWeights,
    thresholds: TriggerThresholds,
    max_segments: int = 4,
    params: CostParams = DEFAULT_PARAMS,
    policy: MigrationPolicy = MigrationPolicy(),
) -> Tuple[OrchestratorState, ReconfigEvent]:
    """Run one monitoring cycle

    Args:
        state: The orchestrator state
        env: The monitored metrics
        world: The system state now
        weights: Objective weights
        thresholds: Trigger thresholds and cool-down
        max_segments: Largest scheme the split revision may choose
        params: Constants of the cost forms
        policy: Migration cost model

    Returns:
        The new state and the event of this cycle. Idle cycles return a
        `no-op` event without logging it.
    """
    t = world.t
    base = dict(
        t=t,
        old_boundaries=state.boundaries,
        new_boundaries=state.boundaries,
        old_placement=state.placement.assignment,
        new_placement=state.placement.assignment,
        epoch=state.epoch,
    )
    if state.mode is Mode.STATIC:
        return state, ReconfigEvent(kind=NOOP, **base)

    report = should_reconfigure(env, thresholds, t, state.t_last)
    logger.debug("t=%.1f trigger %s", t, report.describe())
    causes = _causes(report)
    if not report.fired:
        if report.suppressed_by_cooldown:
            event = ReconfigEvent(kind=SUPPRESSED, causes=causes, **base)
            return state.log(event), event
        return state, ReconfigEvent(kind=NOOP, **base)

    migration_total: Optional[float] = None
    cleared = False
    try:
        candidate, candidate_cost = solve_placement(
            state.scheme, world, weights, params=params
        )
    except NoFeasiblePlacement:
        candidate = None
    else:
        migration_total = candidate_cost.total
        cleared = clears(
            state.scheme, candidate, candidate_cost, world, causes, thresholds
        )

    if cleared:
        kind = MIGRATION
        new_scheme, new_placement, new_cost = state.scheme, candidate, candidate_cost
    else:
        kind = RESPLIT
        try:
            new_scheme, new_placement, new_cost = split_revision(
                state.profile, max_segments, world, weights, params=params
            )
        except NoFeasiblePlacement as exc:
            logger.warning("t=%.1f reconfiguration failed: %s", t, exc)
            event = ReconfigEvent(
                kind=FAILED,
                causes=causes,
                migration_total=migration_total,
                migration_cleared=cleared if candidate is not None else None,
                detail=str(exc),
                **base,
            )
            return state.log(event), event

    evaluations = dict(
        causes=causes,
        migration_total=migration_total,
        migration_cleared=cleared if candidate is not None else None,
        new_total=new_cost.total,
    )
    if (
        new_scheme.boundaries == state.boundaries
        and new_placement == state.placement
    ):
        event = ReconfigEvent(kind=NOOP, **evaluations, **base)
        return state.log(event), event

    report_new = check_feasible(new_scheme, new_placement, world)
    try:
        if not report_new.feasible:
            raise NoFeasiblePlacement(
                " ".join(v.detail for v in report_new.violated)
            )
        moved_bytes, delay_ms = migration_cost(
            state.scheme, state.placement, new_scheme, new_placement, world, policy
        )
    except (NoFeasiblePlacement, NoLink) as exc:
        logger.warning("t=%.1f reconfiguration failed: %s", t, exc)
        event = ReconfigEvent(kind=FAILED, detail=str(exc), **evaluations, **base)
        return state.log(event), event

    epoch = state.epoch + 1
    base.update(
        new_boundaries=new_scheme.boundaries,
        new_placement=new_placement.assignment,
        epoch=epoch,
    )
    event = ReconfigEvent(
        kind=kind,
        applied=True,
        migration_bytes=moved_bytes,
        migration_delay_ms=delay_ms,
        **evaluations,
        **base,
    )
    logger.info(
        "t=%.1f %s (%s): %s on %s -> %s on %s, %.3g bytes, ready in %.1f ms",
        t,
        kind,
        ",".join(causes),
        list(state.boundaries),
        state.placement,
        list(new_scheme.boundaries),
        new_placement,
        moved_bytes,
        delay_ms,
    )
    new_state = replace(
        state,
        scheme=new_scheme,
        placement=new_placement,
        t_last=t,
        epoch=epoch,
        ready_at=t + delay_ms / 1000.0,
    )
    return new_state.log(event), event


def applied_events(events: Sequence[ReconfigEvent]) -> Tuple[ReconfigEvent, ...]:
    return tuple(event for event in events if event.applied)


def event_counts(events: Sequence[ReconfigEvent]) -> Dict[str, int]:
    """Number of logged events per kind"""
    counts: Dict[str, int] = {}
    for event in events:
        counts[event.kind] = counts.get(event.kind, 0) + 1
    return counts
