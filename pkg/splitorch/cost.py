"""Latency, utilization and privacy cost of a placed split scheme

The scalarized objective is

    total = alpha * L + beta * U + gamma * P

with `L` the end-to-end latency of one request (processing, queueing and
transfer), `U` the utilization imbalance/overload term and `P` the number of
privacy-critical segments on untrusted nodes.

All functions here are pure. They take the scheme either as a `SplitScheme`
or as a plain sequence of segments, and the placement either as a
`Placement` or as a sequence of node ids, so that prefixes of a scheme can
be costed while a placement is being built.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Collection,
    Dict,
    FrozenSet,
    Mapping,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .infra import CapacitySnapshot
from .model import Segment, SplitScheme
from .utils import NoLink, OverloadSingularity, UnknownNode

if TYPE_CHECKING:  # pragma: no cover
    from .infra import Topology
    from .solver import Placement

SchemeLike = Union[SplitScheme, Sequence[Segment]]
PlacementLike = Union["Placement", Sequence[str]]


@dataclass(frozen=True)
class CostWeights:
    """Weights of latency, utilization and privacy in the objective"""

    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1000.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"Cost weight {name} must be >= 0.")

    def scaled(self, factor: float) -> "CostWeights":
        return CostWeights(
            self.alpha * factor, self.beta * factor, self.gamma * factor
        )


@dataclass(frozen=True)
class CostParams:
    """Constants of the queueing and utilization cost forms

    Attributes:
        q_scale_ms: Scale of the `rho / (1 - rho)` queueing delay
        rho_cap: Utilization at which queueing delay is capped
        overload_penalty: Weight of the overload hinge in `U`
    """

    q_scale_ms: float = 20.0
    rho_cap: float = 0.99
    overload_penalty: float = 10.0

    def __post_init__(self) -> None:
        if self.q_scale_ms < 0 or self.overload_penalty < 0:
            raise ValueError("q_scale_ms and overload_penalty must be >= 0.")
        if not 0 < self.rho_cap < 1:
            raise ValueError("rho_cap must be within (0, 1).")


DEFAULT_PARAMS = CostParams()


@dataclass(frozen=True)
class SystemState:
    """The state of the system at time `t`

    Build it with `Topology.snapshot`.

    Attributes:
        t: Time in seconds
        topology: The topology the state was taken from
        capacities: Capacity snapshot per node id
        bandwidths: Bandwidth in Mb/s per linked node pair
        request_rate: Offered load in requests/s
        workload: Per-request workload multiplier
    """

    t: float
    topology: "Topology" = field(repr=False)
    capacities: Mapping[str, CapacitySnapshot] = field(repr=False)
    bandwidths: Mapping[FrozenSet[str], float] = field(repr=False)
    request_rate: float = 0.0
    workload: float = 1.0

    def capacity(self, node_id: str) -> CapacitySnapshot:
        try:
            return self.capacities[node_id]
        except KeyError:
            raise UnknownNode(f"Unknown node {node_id!r}.") from None

    def bandwidth(self, a: str, b: str) -> float:
        """Bandwidth in Mb/s between two distinct linked nodes

        Raises:
            NoLink: When the nodes are not linked
        """
        try:
            return self.bandwidths[frozenset((a, b))]
        except KeyError:
            raise NoLink(f"Nodes {a!r} and {b!r} are not linked.") from None

    def propagation_ms(self, a: str, b: str) -> float:
        return self.topology.link(a, b).propagation_delay_ms

    @property
    def min_bandwidth(self) -> float:
        return min(self.bandwidths.values(), default=float("inf"))


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-stage latency of one request

    Attributes:
        total_ms: End-to-end latency `sum(proc) + sum(queue) + sum(tx)`
        proc_ms: Processing time per segment
        queue_ms: Queueing delay per distinct hosting node
        tx_ms: Transfer time per boundary, propagation included,
            0 when both sides are co-located
        utilization: Uncapped utilization of every topology node
        capped_nodes: Hosting nodes whose utilization hit `rho_cap`
        bottleneck_ms: Busy time of the slowest pipeline stage per request,
            i.e. processing per node or serialization per link
    """

    total_ms: float
    proc_ms: Tuple[float, ...]
    queue_ms: Mapping[str, float]
    tx_ms: Tuple[float, ...]
    utilization: Mapping[str, float]
    capped_nodes: Tuple[str, ...]
    bottleneck_ms: float

    @property
    def capped(self) -> bool:
        return bool(self.capped_nodes)


@dataclass(frozen=True)
class CostBreakdown:
    """The objective and its components

    Attributes:
        latency_ms: L
        utilization_term: U
        privacy_violations: P
        total: `alpha * L + beta * U + gamma * P`
        latency: The per-stage latency breakdown behind L
    """

    latency_ms: float
    utilization_term: float
    privacy_violations: int
    total: float
    latency: LatencyBreakdown = field(repr=False, compare=False)


def _segments(scheme: SchemeLike) -> Tuple[Segment, ...]:
    return tuple(getattr(scheme, "segments", scheme))


def _hosts(placement: PlacementLike) -> Tuple[str, ...]:
    return tuple(getattr(placement, "assignment", placement))


def _shape(scheme: SchemeLike, placement: PlacementLike):
    segs = _segments(scheme)
    hosts = _hosts(placement)
    if len(segs) != len(hosts):
        raise ValueError(
            f"Placement assigns {len(hosts)} segment(s), scheme has {len(segs)}."
        )
    return segs, hosts


def processing_ms(segment: Segment, host: str, state: SystemState) -> float:
    """`W_r * load_compute / compute_rate_free`, in milliseconds"""
    rate = state.capacity(host).compute_rate_free
    return 1000.0 * state.workload * segment.load_compute / rate


def node_utilization(
    scheme: SchemeLike,
    placement: PlacementLike,
    state: SystemState,
) -> Dict[str, float]:
    """Utilization of every node: exogenous load plus the Erlang load
    `request_rate * processing time` of the segments it hosts. Not capped.
    """
    segs, hosts = _shape(scheme, placement)
    rho = {nid: state.capacity(nid).utilization for nid in state.topology.node_ids}
    for seg, host in zip(segs, hosts):
        rho[host] = rho.get(host, 0.0) + (
            state.request_rate * processing_ms(seg, host, state) / 1000.0
        )
    return rho


def latency(
    scheme: SchemeLike,
    placement: PlacementLike,
    state: SystemState,
    params: CostParams = DEFAULT_PARAMS,
    raise_exc: bool = False,
) -> LatencyBreakdown:
    """End-to-end latency of one request

    `L = sum_j T_proc(j) + sum_n T_queue(n) + sum_boundaries T_tx`, where
    `T_queue(n) = q_scale * rho_n / (1 - rho_n)` over the distinct hosting
    nodes with `rho_n` capped at `rho_cap`, and a boundary between two
    different hosts costs `bits / bandwidth + propagation delay`.

    Args:
        scheme: The split scheme (or a prefix of its segments)
        placement: The host of each segment
        state: The system state
        params: Constants of the queueing form
        raise_exc: Raise `OverloadSingularity` instead of capping and
            flagging a node whose utilization reaches `rho_cap`

    Raises:
        NoLink: When consecutive segments sit on unlinked nodes
        OverloadSingularity: When `raise_exc` is set and a hosting node's
            utilization reaches `rho_cap`
    """
    segs, hosts = _shape(scheme, placement)

    proc = tuple(processing_ms(seg, host, state) for seg, host in zip(segs, hosts))
    node_busy: Dict[str, float] = {}
    for host, p in zip(hosts, proc):
        node_busy[host] = node_busy.get(host, 0.0) + p

    rho = node_utilization(segs, hosts, state)
    queue: Dict[str, float] = {}
    capped = []
    for host in node_busy:
        r = rho[host]
        if r >= params.rho_cap:
            capped.append(host)
            r = params.rho_cap
        queue[host] = params.q_scale_ms * r / (1.0 - r)

    if capped and raise_exc:
        raise OverloadSingularity(
            f"Utilization of {', '.join(map(repr, capped))} reaches the "
            f"cap {params.rho_cap} at t = {state.t}."
        )

    tx = []
    link_busy: Dict[FrozenSet[str], float] = {}
    for seg, a, b in zip(segs, hosts, hosts[1:]):
        if a == b:
            tx.append(0.0)
            continue
        serialization = seg.boundary_activation_bits / (state.bandwidth(a, b) * 1e3)
        tx.append(serialization + state.propagation_ms(a, b))
        pair = frozenset((a, b))
        link_busy[pair] = link_busy.get(pair, 0.0) + serialization

    return LatencyBreakdown(
        total_ms=sum(proc) + sum(queue.values()) + sum(tx),
        proc_ms=proc,
        queue_ms=queue,
        tx_ms=tuple(tx),
        utilization=rho,
        capped_nodes=tuple(capped),
        bottleneck_ms=max((*node_busy.values(), *link_busy.values()), default=0.0),
    )


def _utilization_from_rho(rho: Mapping[str, float], params: CostParams) -> float:
    values = np.fromiter(rho.values(), dtype=float, count=len(rho))
    overload = np.clip(values - 1.0, 0.0, None).sum()
    return float(values.std() + params.overload_penalty * overload)


def utilization_term(
    scheme: SchemeLike,
    placement: PlacementLike,
    state: SystemState,
    params: CostParams = DEFAULT_PARAMS,
) -> float:
    """Resource imbalance and overload

    `U = stddev_n(rho_n) + overload_penalty * sum_n max(0, rho_n - 1)`, the
    population standard deviation over all topology nodes.
    """
    return _utilization_from_rho(node_utilization(scheme, placement, state), params)


def privacy_violations(
    scheme: SchemeLike,
    placement: PlacementLike,
    trusted: Collection[str],
) -> int:
    """Number of privacy-critical segments hosted on untrusted nodes"""
    segs, hosts = _shape(scheme, placement)
    return sum(
        1
        for seg, host in zip(segs, hosts)
        if seg.privacy_critical and host not in trusted
    )


def total_cost(
    scheme: SchemeLike,
    placement: PlacementLike,
    state: SystemState,
    weights: CostWeights,
    params: CostParams = DEFAULT_PARAMS,
    trusted: Collection[str] = None,
) -> CostBreakdown:
    """Evaluate `alpha * L + beta * U + gamma * P`

    Args:
        trusted: The trusted node set. Defaults to the topology's.

    Raises:
        NoLink: See `latency`
    """
    if trusted is None:
        trusted = state.topology.trusted
    lat = latency(scheme, placement, state, params)
    util = _utilization_from_rho(lat.utilization, params)
    priv = privacy_violations(scheme, placement, trusted)
    return CostBreakdown(
        latency_ms=lat.total_ms,
        utilization_term=util,
        privacy_violations=priv,
        total=weights.alpha * lat.total_ms + weights.beta * util + weights.gamma * priv,
        latency=lat,
    )
