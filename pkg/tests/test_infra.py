import pytest
from splitorch.infra import Node, Topology, Trace
from splitorch.utils import NoLink, TraceError, UnknownNode

from .conftest import link


def test_trace_is_right_continuous():
    trace = Trace.from_pairs([(0, 100), (60, 20)])
    assert trace.value_at(0) == 100
    assert trace.value_at(59.9) == 100
    assert trace.value_at(60) == 20
    assert trace.value_at(1e6) == 20
    assert trace.min_value == 20
    assert trace.max_value == 100


def test_trace_coerce():
    assert Trace.coerce(3).value_at(10) == 3.0
    trace = Trace.constant(1.5)
    assert Trace.coerce(trace) is trace
    assert Trace.coerce([[0, 1], [2, 3]]).value_at(2) == 3.0


@pytest.mark.parametrize(
    "pairs",
    [[], [(1, 10)], [(0, 1), (0, 2)], [(0, 1), (5, 2), (3, 1)], [(0, 1, 2)]],
)
def test_trace_invalid(pairs):
    with pytest.raises(TraceError):
        Trace.from_pairs(pairs)


def test_trace_before_zero():
    with pytest.raises(TraceError, match="from t = 0"):
        Trace.constant(1).value_at(-0.1)


def test_node_validation():
    with pytest.raises(ValueError, match="compute_rate"):
        Node("n", 0, 1)
    with pytest.raises(ValueError, match="mem_capacity"):
        Node("n", 1, 0)
    with pytest.raises(TraceError, match="within"):
        Node("n", 1, 1, utilization=1.0)
    with pytest.raises(TraceError, match="mem_reserved"):
        Node("n", 1, 1, mem_reserved=-1)


def test_link_validation():
    with pytest.raises(ValueError, match="two distinct"):
        link("a", "a")
    with pytest.raises(TraceError, match="bandwidth"):
        link("a", "b", bandwidth=0)
    with pytest.raises(ValueError, match="propagation"):
        link("a", "b", delay=-1)
    assert link("b", "a").name == "a<->b"


def test_topology_validation():
    a, b = Node("a", 1, 1), Node("b", 1, 1)
    with pytest.raises(ValueError, match="Duplicate node"):
        Topology((a, a), ())
    with pytest.raises(ValueError, match="At most one cloud"):
        Topology(
            (Node("c1", 1, 1, is_cloud=True), Node("c2", 1, 1, is_cloud=True)), ()
        )
    with pytest.raises(UnknownNode, match="unknown node 'x'"):
        Topology((a, b), (link("a", "x"),))
    with pytest.raises(ValueError, match="Duplicate link"):
        Topology((a, b), (link("a", "b"), link("b", "a")))
    with pytest.raises(ValueError, match="at least one node"):
        Topology((), ())


def test_unreachable_nodes():
    nodes = (Node("a", 1, 1), Node("b", 1, 1), Node("c", 1, 1), Node("d", 1, 1))
    assert Topology(nodes[:1], ()).unreachable == ()
    chain = Topology(nodes, (link("a", "b"), link("c", "b"), link("c", "d")))
    assert chain.unreachable == ()
    assert Topology(nodes, (link("a", "b"), link("c", "d"))).unreachable == ("c", "d")
    assert Topology(nodes, ()).unreachable == ("b", "c", "d")


def test_capacity_at():
    node = Node(
        "edge",
        10e12,
        8e9,
        utilization=[(0, 0.2), (10, 0.5)],
        mem_reserved=[(0, 0), (10, 2e9)],
    )
    topology = Topology((node,), ())

    cap = topology.capacity_at("edge", 0)
    assert cap.compute_rate_free == pytest.approx(8e12)
    assert cap.mem_free == 8e9
    assert cap.utilization == 0.2

    cap = topology.capacity_at("edge", 10)
    assert cap.compute_rate_free == pytest.approx(5e12)
    assert cap.mem_free == 6e9

    with pytest.raises(UnknownNode):
        topology.capacity_at("nope", 0)
    with pytest.raises(TraceError):
        topology.capacity_at("edge", -1)


def test_bandwidth_at():
    topology = Topology(
        (Node("a", 1, 1), Node("b", 1, 1), Node("c", 1, 1)),
        (link("a", "b", bandwidth=[(0, 100), (5, 20)]),),
    )
    assert topology.bandwidth_at("a", "b", 4) == 100
    assert topology.bandwidth_at("b", "a", 5) == 20
    assert topology.has_link("b", "a")
    with pytest.raises(NoLink, match="not linked"):
        topology.bandwidth_at("a", "c", 0)
    with pytest.raises(NoLink, match="self-link"):
        topology.bandwidth_at("a", "a", 0)
    with pytest.raises(TraceError):
        topology.bandwidth_at("a", "b", -1)


def test_fully_connected_keeps_explicit_links():
    nodes = (Node("a", 1, 1), Node("b", 1, 1), Node("c", 1, 1))
    topology = Topology.fully_connected(
        nodes, 1000, 1.0, links=(link("a", "c", bandwidth=50, backhaul=False),)
    )
    assert len(topology.links) == 3
    assert topology.bandwidth_at("a", "c", 0) == 50
    assert topology.bandwidth_at("a", "b", 0) == 1000
    assert topology.link("b", "c").propagation_delay_ms == 1.0


def test_with_backhaul_bandwidth():
    nodes = (Node("a", 1, 1), Node("b", 1, 1), Node("c", 1, 1))
    topology = Topology(
        nodes,
        (
            link("a", "b", bandwidth=[(0, 100), (5, 20)]),
            link("b", "c", bandwidth=1000, backhaul=False),
        ),
    )
    pinned = topology.with_backhaul_bandwidth(50)
    assert pinned.bandwidth_at("a", "b", 0) == 50
    assert pinned.bandwidth_at("a", "b", 10) == 50
    assert pinned.bandwidth_at("b", "c", 0) == 1000
    # the original is untouched
    assert topology.bandwidth_at("a", "b", 10) == 20


def test_trusted_and_cloud():
    topology = Topology(
        (
            Node("a", 1, 1, trusted=True),
            Node("b", 1, 1),
            Node("c", 1, 1, is_cloud=True),
        ),
        (),
    )
    assert topology.trusted == frozenset({"a"})
    assert topology.cloud.node_id == "c"
    assert topology.node_ids == ("a", "b", "c")
    assert Topology((Node("a", 1, 1),), ()).cloud is None


def test_snapshot():
    topology = Topology(
        (Node("a", 10, 1, utilization=0.5), Node("b", 1, 1)),
        (link("a", "b", bandwidth=[(0, 100), (5, 20)]),),
    )
    state = topology.snapshot(5, request_rate=3, workload=2)
    assert state.t == 5
    assert state.request_rate == 3
    assert state.workload == 2
    assert state.capacity("a").compute_rate_free == 5
    assert state.bandwidth("b", "a") == 20
    assert state.min_bandwidth == 20
    with pytest.raises(UnknownNode):
        state.capacity("x")
