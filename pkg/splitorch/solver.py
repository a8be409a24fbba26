"""Feasibility checks and placement/split solvers

Constraints on a placement of `k` segments:

- unique: every segment sits on exactly one known node
- capacity: per node, hosted weights fit into the free memory and the total
  utilization (exogenous plus induced) stays below 1
- privacy: privacy-critical segments sit on trusted nodes
- connectivity: consecutive segments on different nodes are linked

All of them are monotone: once a prefix of the assignment violates one, no
extension can repair it. The exhaustive solver prunes on exactly that.

Ties are broken deterministically: fewest segments first, then boundary
lists in lexicographic order, then assignments in lexicographic order of
node positions in the topology.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import product
from typing import Collection, Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from .cost import (
    DEFAULT_PARAMS,
    CostBreakdown,
    CostParams,
    CostWeights,
    SchemeLike,
    SystemState,
    _segments,
    processing_ms,
    total_cost,
)
from .model import ModelProfile, Segment, SplitScheme, enumerate_splits, make_split
from .utils import GreedyDeadEnd, NoFeasiblePlacement, UnknownNode

logger = logging.getLogger(__name__)

UNIQUE = "unique"
CAPACITY = "capacity"
PRIVACY = "privacy"
CONNECTIVITY = "connectivity"


@dataclass(frozen=True)
class Placement:
    """Maps segment `j` to the node hosting it

    This is the binary placement matrix `x` in vector form: exactly one node
    per segment by construction. See `matrix` for the matrix view.
    """

    assignment: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", tuple(self.assignment))

    @classmethod
    def colocated(cls, node_id: str, k: int) -> "Placement":
        return cls((node_id,) * k)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, node_ids: Sequence[str]) -> "Placement":
        """Build a placement from a binary `nodes x segments` matrix

        Raises:
            ValueError: When a column does not hold exactly one 1
        """
        matrix = np.asarray(matrix)
        if matrix.shape[0] != len(node_ids):
            raise ValueError(
                f"Matrix has {matrix.shape[0]} rows for {len(node_ids)} nodes."
            )
        colsum = matrix.sum(axis=0)
        if not np.all(colsum == 1):
            raise ValueError(
                "Every segment must be placed on exactly one node, column "
                f"sums are {colsum.tolist()}."
            )
        return cls(tuple(node_ids[i] for i in matrix.argmax(axis=0)))

    @property
    def k(self) -> int:
        return len(self.assignment)

    def matrix(self, node_ids: Sequence[str]) -> np.ndarray:
        """The binary placement matrix, rows in `node_ids` order

        Raises:
            UnknownNode: When a host is not in `node_ids`
        """
        rows = {nid: i for i, nid in enumerate(node_ids)}
        out = np.zeros((len(node_ids), self.k), dtype=np.int8)
        for j, host in enumerate(self.assignment):
            try:
                out[rows[host], j] = 1
            except KeyError:
                raise UnknownNode(f"Unknown node {host!r}.") from None
        return out

    def hosts(self) -> Tuple[str, ...]:
        """Distinct hosting nodes, in order of first use"""
        return tuple(dict.fromkeys(self.assignment))

    def __iter__(self) -> Iterator[str]:
        return iter(self.assignment)

    def __len__(self) -> int:
        return len(self.assignment)

    def __str__(self) -> str:
        return "[" + ", ".join(self.assignment) + "]"


@dataclass(frozen=True)
class Violation:
    """One violated constraint

    Attributes:
        constraint: One of `unique`, `capacity`, `privacy`, `connectivity`
        detail: Human readable description
    """

    constraint: str
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    violated: Tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violated

    @property
    def constraints(self) -> Tuple[str, ...]:
        """Names of the violated constraints, deduplicated"""
        return tuple(dict.fromkeys(v.constraint for v in self.violated))

    def __bool__(self) -> bool:
        return self.feasible


class _NodeLoad:
    """Running per-node totals shared by the checks and the solvers, so that
    pruning and `check_feasible` accumulate identically"""

    __slots__ = ("mem", "rho")

    def __init__(self, mem: float, rho: float) -> None:
        self.mem = mem
        self.rho = rho


def _induced(seg: Segment, host: str, state: SystemState) -> float:
    return state.request_rate * processing_ms(seg, host, state) / 1000.0


def check_feasible(
    scheme: SchemeLike,
    placement: Sequence[str],
    state: SystemState,
    trusted: Collection[str] = None,
) -> FeasibilityReport:
    """Check a placement against the unique-assignment, capacity, privacy
    and connectivity constraints

    Reports rather than raises. `placement` may be a `Placement` or a
    sequence of node ids; `scheme` may be a prefix of segments.

    Args:
        trusted: The trusted node set. Defaults to the topology's.
    """
    segs = _segments(scheme)
    hosts = tuple(getattr(placement, "assignment", placement))
    topology = state.topology
    if trusted is None:
        trusted = topology.trusted

    violated: List[Violation] = []
    if len(hosts) != len(segs):
        violated.append(
            Violation(
                UNIQUE,
                f"{len(hosts)} assignment(s) for {len(segs)} segment(s).",
            )
        )
        return FeasibilityReport(tuple(violated))

    known = set(topology.node_ids)
    for j, host in enumerate(hosts):
        if host not in known:
            violated.append(
                Violation(UNIQUE, f"Segment {j} is assigned to unknown node {host!r}.")
            )
    if violated:
        return FeasibilityReport(tuple(violated))

    loads: Dict[str, _NodeLoad] = {}
    for seg, host in zip(segs, hosts):
        load = loads.get(host)
        if load is None:
            load = loads[host] = _NodeLoad(0.0, state.capacity(host).utilization)
        load.mem += seg.load_mem
        load.rho += _induced(seg, host, state)

    for host, load in loads.items():
        cap = state.capacity(host)
        if load.mem > cap.mem_free:
            violated.append(
                Violation(
                    CAPACITY,
                    f"Node {host!r} hosts {load.mem:.6g} bytes of weights, "
                    f"{cap.mem_free:.6g} free.",
                )
            )
        if load.rho >= 1.0:
            violated.append(
                Violation(
                    CAPACITY,
                    f"Node {host!r} would run at utilization {load.rho:.4f}.",
                )
            )

    for seg, host in zip(segs, hosts):
        if seg.privacy_critical and host not in trusted:
            violated.append(
                Violation(
                    PRIVACY,
                    f"Privacy-critical segment {seg.segment_index} is on "
                    f"untrusted node {host!r}.",
                )
            )

    for j, (a, b) in enumerate(zip(hosts, hosts[1:])):
        if a != b and not topology.has_link(a, b):
            violated.append(
                Violation(
                    CONNECTIVITY,
                    f"Segments {j} and {j + 1} sit on unlinked nodes "
                    f"{a!r} and {b!r}.",
                )
            )

    return FeasibilityReport(tuple(violated))


def _no_feasible(scheme: SchemeLike, state: SystemState, trusted) -> NoFeasiblePlacement:
    segs = _segments(scheme)
    critical = [seg.segment_index for seg in segs if seg.privacy_critical]
    hint = ""
    if critical and not trusted:
        hint = (
            f" Segment(s) {critical} are privacy-critical but the trusted "
            "set is empty."
        )
    return NoFeasiblePlacement(
        f"No feasible placement of {len(segs)} segment(s) on "
        f"{len(state.topology.nodes)} node(s) at t = {state.t}.{hint}"
    )


def solve_placement(
    scheme: SchemeLike,
    state: SystemState,
    weights: CostWeights,
    trusted: Collection[str] = None,
    params: CostParams = DEFAULT_PARAMS,
) -> Tuple[Placement, CostBreakdown]:
    """The feasible placement minimizing the objective for a fixed scheme

    Depth-first search over segments in order and nodes in topology order,
    pruning prefixes that already violate capacity, privacy or connectivity.
    Ties go to the lexicographically smallest assignment.

    Raises:
        NoFeasiblePlacement: When no placement is feasible
    """
    segs = _segments(scheme)
    topology = state.topology
    if trusted is None:
        trusted = topology.trusted
    node_ids = topology.node_ids
    caps = {nid: state.capacity(nid) for nid in node_ids}

    k = len(segs)
    hosts: List[str] = []
    loads = {nid: _NodeLoad(0.0, caps[nid].utilization) for nid in node_ids}
    best: List = [None, None]
    stats = {"leaves": 0, "pruned": 0}

    def dfs(j: int) -> None:
        if j == k:
            stats["leaves"] += 1
            cost = total_cost(segs, hosts, state, weights, params, trusted)
            if best[1] is None or cost.total < best[1].total:
                best[0] = Placement(tuple(hosts))
                best[1] = cost
            return

        seg = segs[j]
        for nid in node_ids:
            if seg.privacy_critical and nid not in trusted:
                stats["pruned"] += 1
                continue
            if hosts and hosts[-1] != nid and not topology.has_link(hosts[-1], nid):
                stats["pruned"] += 1
                continue
            load = loads[nid]
            prev_mem, prev_rho = load.mem, load.rho
            load.mem += seg.load_mem
            load.rho += _induced(seg, nid, state)
            if load.mem <= caps[nid].mem_free and load.rho < 1.0:
                hosts.append(nid)
                dfs(j + 1)
                hosts.pop()
            else:
                stats["pruned"] += 1
            load.mem, load.rho = prev_mem, prev_rho

    dfs(0)
    logger.debug(
        "solve_placement: k=%d, %d node(s), %d leaves evaluated, "
        "%d branches pruned",
        k,
        len(node_ids),
        stats["leaves"],
        stats["pruned"],
    )
    if best[0] is None:
        raise _no_feasible(segs, state, trusted)
    return best[0], best[1]


def brute_force_oracle(
    scheme: SchemeLike,
    state: SystemState,
    weights: CostWeights,
    trusted: Collection[str] = None,
    params: CostParams = DEFAULT_PARAMS,
) -> Tuple[Placement, CostBreakdown]:
    """Reference for `solve_placement`: same contract, no pruning, every one
    of the `nodes ** k` assignments is checked and costed

    Raises:
        NoFeasiblePlacement: When no placement is feasible
    """
    segs = _segments(scheme)
    if trusted is None:
        trusted = state.topology.trusted
    best_placement, best_cost = None, None
    for hosts in product(state.topology.node_ids, repeat=len(segs)):
        if not check_feasible(segs, hosts, state, trusted).feasible:
            continue
        cost = total_cost(segs, hosts, state, weights, params, trusted)
        if best_cost is None or cost.total < best_cost.total:
            best_placement, best_cost = Placement(hosts), cost
    if best_placement is None:
        raise _no_feasible(segs, state, trusted)
    return best_placement, best_cost


def greedy_placement(
    scheme: SchemeLike,
    state: SystemState,
    weights: CostWeights,
    trusted: Collection[str] = None,
    params: CostParams = DEFAULT_PARAMS,
) -> Tuple[Placement, CostBreakdown]:
    """Assign segments one at a time, each to the feasible node minimizing
    the objective of the prefix placed so far

    Never violates a constraint, but carries no optimality guarantee.

    Raises:
        GreedyDeadEnd: When some segment has no feasible node given the
            choices made for the segments before it
    """
    segs = _segments(scheme)
    if trusted is None:
        trusted = state.topology.trusted

    hosts: List[str] = []
    for j in range(len(segs)):
        prefix = segs[: j + 1]
        best_node, best_total = None, None
        for nid in state.topology.node_ids:
            candidate = (*hosts, nid)
            if not check_feasible(prefix, candidate, state, trusted).feasible:
                continue
            cost = total_cost(prefix, candidate, state, weights, params, trusted)
            if best_total is None or cost.total < best_total:
                best_node, best_total = nid, cost.total
        if best_node is None:
            raise GreedyDeadEnd(
                f"Greedy placement found no feasible node for segment {j} "
                f"after placing {hosts} at t = {state.t}."
            )
        hosts.append(best_node)

    return Placement(hosts), total_cost(segs, hosts, state, weights, params, trusted)


@dataclass(frozen=True)
class GreedyGap:
    """How far greedy placement lands from the optimum over a batch

    Attributes:
        instances: Instances evaluated
        infeasible: Instances without any feasible placement
        dead_ends: Feasible instances where greedy got stuck
        gaps: `(greedy - optimum) / optimum` of every instance greedy solved
    """

    instances: int
    infeasible: int
    dead_ends: int
    gaps: Tuple[float, ...]

    @property
    def mean_gap(self) -> float:
        return float(np.mean(self.gaps)) if self.gaps else 0.0

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if self.gaps else 0.0


def greedy_gap(
    cases: Iterable[Tuple[SchemeLike, SystemState]],
    weights: CostWeights,
    params: CostParams = DEFAULT_PARAMS,
) -> GreedyGap:
    """Run `greedy_placement` and `brute_force_oracle` on every
    `(scheme, state)` case and collect the relative optimality gap

    Cases without any feasible placement are counted and skipped. Greedy
    failures other than `GreedyDeadEnd` propagate.
    """
    instances = infeasible = dead_ends = 0
    gaps: List[float] = []
    for scheme, state in cases:
        instances += 1
        try:
            _, best = brute_force_oracle(scheme, state, weights, params=params)
        except NoFeasiblePlacement:
            infeasible += 1
            continue
        try:
            _, cost = greedy_placement(scheme, state, weights, params=params)
        except GreedyDeadEnd:
            dead_ends += 1
            continue
        gaps.append((cost.total - best.total) / best.total)

    gap = GreedyGap(instances, infeasible, dead_ends, tuple(gaps))
    logger.info(
        "greedy: mean gap %.2f%%, max %.2f%% over %d solved instance(s); "
        "%d dead end(s), %d infeasible",
        100.0 * gap.mean_gap,
        100.0 * gap.max_gap,
        len(gaps),
        dead_ends,
        infeasible,
    )
    return gap


def split_revision(
    profile: ModelProfile,
    max_segments: int,
    state: SystemState,
    weights: CostWeights,
    trusted: Collection[str] = None,
    params: CostParams = DEFAULT_PARAMS,
) -> Tuple[SplitScheme, Placement, CostBreakdown]:
    """Jointly choose the split scheme and its placement

    Minimizes the objective over all contiguous schemes with at most
    `max_segments` segments and all their feasible placements.

    Raises:
        NoFeasiblePlacement: When no scheme has a feasible placement
    """
    best = None
    infeasible = 0
    schemes = enumerate_splits(profile, max_segments)
    for scheme in schemes:
        try:
            placement, cost = solve_placement(scheme, state, weights, trusted, params)
        except NoFeasiblePlacement:
            infeasible += 1
            continue
        if best is None or cost.total < best[2].total:
            best = (scheme, placement, cost)

    logger.debug(
        "split_revision: %d scheme(s) searched, %d infeasible",
        len(schemes),
        infeasible,
    )
    if best is None:
        raise NoFeasiblePlacement(
            f"None of the {len(schemes)} split scheme(s) of "
            f"{profile.name!r} with at most {max_segments} segment(s) has a "
            f"feasible placement at t = {state.t}."
        )
    return best


def identity_split(profile: ModelProfile) -> SplitScheme:
    """The one-segment scheme"""
    return make_split(profile, ())
