"""Nodes, links and their time-varying capacities

Every time-varying quantity is a piecewise-constant, right-continuous
`Trace`: the value at a breakpoint is the new value, one tick before it the
old one. Traces start at `t = 0`.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import (
    TYPE_CHECKING,
    Dict,
    FrozenSet,
    Iterable,
    Mapping,
    Sequence,
    Tuple,
    Union,
)

from .utils import NoLink, TraceError, UnknownNode

if TYPE_CHECKING:  # pragma: no cover
    from .cost import SystemState

TraceLike = Union[float, int, Sequence[Sequence[float]], "Trace"]


@dataclass(frozen=True)
class Trace:
    """A piecewise-constant, right-continuous function of time

    Attributes:
        times: Breakpoint times in seconds, strictly increasing, first is 0
        values: The value from each breakpoint on
    """

    times: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.times or len(self.times) != len(self.values):
            raise TraceError("A trace needs matching, non-empty times and values.")
        if self.times[0] != 0:
            raise TraceError(
                f"The first breakpoint must be at t = 0, got {self.times[0]}."
            )
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise TraceError(
                f"Breakpoint times must be strictly increasing: {self.times}."
            )

    @classmethod
    def constant(cls, value: float) -> "Trace":
        return cls((0.0,), (value,))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "Trace":
        pairs = [tuple(pair) for pair in pairs]
        if any(len(pair) != 2 for pair in pairs):
            raise TraceError("Trace breakpoints must be (time, value) pairs.")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def coerce(cls, value: TraceLike) -> "Trace":
        """Turn a scalar or a list of `(time, value)` pairs into a trace"""
        if isinstance(value, Trace):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return cls.constant(value)
        return cls.from_pairs(value)  # type: ignore[arg-type]

    def value_at(self, t: float) -> float:
        """The value at time `t`

        Raises:
            TraceError: When `t < 0`
        """
        if t < 0:
            raise TraceError(f"Traces are defined from t = 0, queried at {t}.")
        return self.values[bisect_right(self.times, t) - 1]

    @property
    def min_value(self) -> float:
        return min(self.values)

    @property
    def max_value(self) -> float:
        return max(self.values)


ZERO = Trace.constant(0.0)


@dataclass(frozen=True)
class Node:
    """An edge node or the cloud

    Attributes:
        node_id: Unique identifier
        compute_rate: Effective FLOPs per second when idle
        mem_capacity: Bytes available for model weights
        is_cloud: Whether this is the cloud node
        trusted: Whether the node may host privacy-critical segments
        utilization: Exogenous utilization trace, samples in `[0, 1)`
        mem_reserved: Bytes held by other workloads over time
    """

    node_id: str
    compute_rate: float
    mem_capacity: float
    is_cloud: bool = False
    trusted: bool = False
    utilization: Trace = ZERO
    mem_reserved: Trace = ZERO

    def __post_init__(self) -> None:
        object.__setattr__(self, "utilization", Trace.coerce(self.utilization))
        object.__setattr__(self, "mem_reserved", Trace.coerce(self.mem_reserved))
        if self.compute_rate <= 0:
            raise ValueError(f"Node {self.node_id!r}: compute_rate must be > 0.")
        if self.mem_capacity <= 0:
            raise ValueError(f"Node {self.node_id!r}: mem_capacity must be > 0.")
        if self.utilization.min_value < 0 or self.utilization.max_value >= 1:
            raise TraceError(
                f"Node {self.node_id!r}: exogenous utilization must be "
                "within [0, 1)."
            )
        if self.mem_reserved.min_value < 0:
            raise TraceError(f"Node {self.node_id!r}: mem_reserved must be >= 0.")


@dataclass(frozen=True)
class Link:
    """An undirected link between two nodes

    Attributes:
        endpoints: The two node ids
        bandwidth: Bandwidth trace in Mb/s
        propagation_delay_ms: One-way propagation delay
        backhaul: Whether bandwidth sweeps override this link
    """

    endpoints: FrozenSet[str]
    bandwidth: Trace
    propagation_delay_ms: float = 0.0
    backhaul: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoints", frozenset(self.endpoints))
        object.__setattr__(self, "bandwidth", Trace.coerce(self.bandwidth))
        if len(self.endpoints) != 2:
            raise ValueError(
                f"A link needs two distinct endpoints, got {sorted(self.endpoints)}."
            )
        if self.bandwidth.min_value <= 0:
            raise TraceError(f"Link {self.name}: bandwidth must be > 0.")
        if self.propagation_delay_ms < 0:
            raise ValueError(f"Link {self.name}: propagation delay must be >= 0.")

    @property
    def name(self) -> str:
        return "<->".join(sorted(self.endpoints))


@dataclass(frozen=True)
class CapacitySnapshot:
    """Capacity profile of a node at one instant

    Attributes:
        compute_rate_free: FLOPs/s left after the exogenous load
        mem_free: Bytes left after other workloads
        utilization: The exogenous utilization
    """

    compute_rate_free: float
    mem_free: float
    utilization: float


@dataclass(frozen=True)
class Topology:
    """Nodes (at most one cloud) and the links between them

    Node order matters: it is the order used for deterministic tie-breaking.
    Pairs without a link cannot host consecutive segments. Scenario
    validation rejects topologies whose links leave a node unreachable.
    """

    nodes: Tuple[Node, ...]
    links: Tuple[Link, ...]
    _nodes_by_id: Dict[str, Node] = field(
        init=False, repr=False, compare=False, hash=False
    )
    _links_by_pair: Dict[FrozenSet[str], Link] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        nodes_by_id: Dict[str, Node] = {}
        for node in self.nodes:
            if node.node_id in nodes_by_id:
                raise ValueError(f"Duplicate node id {node.node_id!r}.")
            nodes_by_id[node.node_id] = node
        if not nodes_by_id:
            raise ValueError("A topology needs at least one node.")
        if sum(node.is_cloud for node in self.nodes) > 1:
            raise ValueError("At most one cloud node is permitted.")

        links_by_pair: Dict[FrozenSet[str], Link] = {}
        for link in self.links:
            for endpoint in link.endpoints:
                if endpoint not in nodes_by_id:
                    raise UnknownNode(
                        f"Link {link.name} references unknown node {endpoint!r}."
                    )
            if link.endpoints in links_by_pair:
                raise ValueError(f"Duplicate link {link.name}.")
            links_by_pair[link.endpoints] = link

        object.__setattr__(self, "_nodes_by_id", nodes_by_id)
        object.__setattr__(self, "_links_by_pair", links_by_pair)

    @classmethod
    def fully_connected(
        cls,
        nodes: Sequence[Node],
        bandwidth: TraceLike,
        propagation_delay_ms: float = 0.0,
        links: Sequence[Link] = (),
    ) -> "Topology":
        """Connect every node pair, keeping any explicitly given links

        Args:
            nodes: The nodes
            bandwidth: Bandwidth (Mb/s or trace) of the generated links
            propagation_delay_ms: Delay of the generated links
            links: Links that take precedence over the generated ones
        """
        explicit = {link.endpoints for link in links}
        generated = [
            Link(frozenset((a.node_id, b.node_id)), bandwidth, propagation_delay_ms)
            for i, a in enumerate(nodes)
            for b in nodes[i + 1:]
            if frozenset((a.node_id, b.node_id)) not in explicit
        ]
        return cls(tuple(nodes), (*links, *generated))

    @property
    def node_ids(self) -> Tuple[str, ...]:
        return tuple(node.node_id for node in self.nodes)

    @property
    def trusted(self) -> FrozenSet[str]:
        return frozenset(node.node_id for node in self.nodes if node.trusted)

    @property
    def cloud(self) -> Union[Node, None]:
        for node in self.nodes:
            if node.is_cloud:
                return node
        return None

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes_by_id[node_id]
        except KeyError:
            raise UnknownNode(f"Unknown node {node_id!r}.") from None

    @property
    def unreachable(self) -> Tuple[str, ...]:
        """Nodes without a path of links from the first node, in node order"""
        first = self.nodes[0].node_id
        seen = {first}
        frontier = [first]
        while frontier:
            current = frontier.pop()
            for pair in self._links_by_pair:
                if current in pair:
                    for other in pair - seen:
                        seen.add(other)
                        frontier.append(other)
        return tuple(nid for nid in self.node_ids if nid not in seen)

    def has_link(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self._links_by_pair

    def link(self, a: str, b: str) -> Link:
        """The link between two distinct nodes

        Raises:
            UnknownNode: When either node does not exist
            NoLink: When `a == b` or the nodes are not linked
        """
        self.node(a)
        self.node(b)
        if a == b:
            raise NoLink(f"No self-link is defined for {a!r}.")
        try:
            return self._links_by_pair[frozenset((a, b))]
        except KeyError:
            raise NoLink(f"Nodes {a!r} and {b!r} are not linked.") from None

    def capacity_at(self, node_id: str, t: float) -> CapacitySnapshot:
        """Capacity profile of a node at time `t`

        `compute_rate_free = compute_rate * (1 - utilization(t))`

        Raises:
            UnknownNode: When the node does not exist
            TraceError: When `t < 0`
        """
        node = self.node(node_id)
        rho_ext = node.utilization.value_at(t)
        return CapacitySnapshot(
            compute_rate_free=node.compute_rate * (1.0 - rho_ext),
            mem_free=max(0.0, node.mem_capacity - node.mem_reserved.value_at(t)),
            utilization=rho_ext,
        )

    def bandwidth_at(self, a: str, b: str, t: float) -> float:
        """Bandwidth in Mb/s between two nodes at time `t`, symmetric in
        `(a, b)`

        Raises:
            NoLink: When `a == b` or the nodes are not linked
            TraceError: When `t < 0`
        """
        return self.link(a, b).bandwidth.value_at(t)

    def with_backhaul_bandwidth(self, mbps: float) -> "Topology":
        """A copy with every backhaul link pinned to a constant bandwidth"""
        return Topology(
            self.nodes,
            tuple(
                replace(link, bandwidth=Trace.constant(mbps))
                if link.backhaul
                else link
                for link in self.links
            ),
        )

    def snapshot(
        self,
        t: float,
        request_rate: float = 0.0,
        workload: float = 1.0,
    ) -> "SystemState":
        """The system state at time `t`

        Args:
            t: Time in seconds
            request_rate: Offered request rate in requests/s, used for the
                utilization induced by hosted segments
            workload: Per-request workload multiplier
        """
        from .cost import SystemState

        return SystemState(
            t=t,
            topology=self,
            capacities={nid: self.capacity_at(nid, t) for nid in self.node_ids},
            bandwidths={
                pair: link.bandwidth.value_at(t)
                for pair, link in self._links_by_pair.items()
            },
            request_rate=request_rate,
            workload=workload,
        )

    def links_by_pair(self) -> Mapping[FrozenSet[str], Link]:
        return dict(self._links_by_pair)
