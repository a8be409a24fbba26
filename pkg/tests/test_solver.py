import logging

import numpy as np
import pytest
from splitorch.cost import CostWeights, total_cost
from splitorch.infra import Node, Topology
from splitorch.model import LayerProfile, ModelProfile, make_split
from splitorch.solver import (
    CAPACITY,
    CONNECTIVITY,
    PRIVACY,
    UNIQUE,
    Placement,
    brute_force_oracle,
    check_feasible,
    greedy_gap,
    greedy_placement,
    identity_split,
    solve_placement,
    split_revision,
)
from splitorch.utils import GreedyDeadEnd, NoFeasiblePlacement, UnknownNode

from .conftest import (
    edge_cloud_topology,
    joint_brute_force,
    link,
    random_instance,
    six_layer_model,
)

WEIGHTS = CostWeights()


def test_placement_matrix_roundtrip():
    placement = Placement(("b", "a", "b"))
    matrix = placement.matrix(("a", "b"))
    assert matrix.tolist() == [[0, 1, 0], [1, 0, 1]]
    assert (matrix.sum(axis=0) == 1).all()
    assert Placement.from_matrix(matrix, ("a", "b")) == placement
    assert placement.hosts() == ("b", "a")
    assert placement.k == len(placement) == 3
    assert str(placement) == "[b, a, b]"


def test_placement_matrix_invalid():
    with pytest.raises(ValueError, match="exactly one node"):
        Placement.from_matrix(np.array([[1, 1], [1, 0]]), ("a", "b"))
    with pytest.raises(ValueError, match="rows"):
        Placement.from_matrix(np.array([[1]]), ("a", "b"))
    with pytest.raises(UnknownNode):
        Placement(("x",)).matrix(("a", "b"))


def test_check_feasible_colocated():
    scheme = make_split(six_layer_model(), [2, 4])
    state = edge_cloud_topology().snapshot(0)
    report = check_feasible(scheme, Placement.colocated("edge", 3), state)
    assert report.feasible
    assert report
    assert report.constraints == ()


def test_check_feasible_memory():
    # ten 1 GB layers on an 8 GB edge node
    profile = ModelProfile.uniform("ten", 10, 1e9, 1e9, 1e6)
    scheme = make_split(profile, [])
    report = check_feasible(scheme, ("edge",), edge_cloud_topology().snapshot(0))
    assert not report
    assert report.constraints == (CAPACITY,)
    assert "bytes of weights" in report.violated[0].detail


def test_check_feasible_utilization():
    scheme = make_split(six_layer_model(), [])
    state = edge_cloud_topology(edge_util=0.98).snapshot(0, request_rate=100)
    report = check_feasible(scheme, ("edge",), state)
    assert report.constraints == (CAPACITY,)
    assert "utilization" in report.violated[0].detail


def test_check_feasible_privacy():
    scheme = make_split(six_layer_model(), [1, 5])
    state = edge_cloud_topology().snapshot(0)
    report = check_feasible(scheme, ("cloud", "cloud", "edge"), state)
    assert report.constraints == (PRIVACY,)
    # an explicit trusted set overrides the topology's
    assert check_feasible(
        scheme, ("cloud", "cloud", "edge"), state, trusted={"edge", "cloud"}
    )


def test_check_feasible_connectivity():
    topology = Topology(
        (Node("a", 1e12, 1e10), Node("b", 1e12, 1e10), Node("c", 1e12, 1e10)),
        (link("a", "b"),),
    )
    scheme = make_split(six_layer_model(critical=()), [3])
    report = check_feasible(scheme, ("a", "c"), topology.snapshot(0))
    assert report.constraints == (CONNECTIVITY,)


def test_check_feasible_unique():
    scheme = make_split(six_layer_model(), [3])
    state = edge_cloud_topology().snapshot(0)
    assert check_feasible(scheme, ("edge",), state).constraints == (UNIQUE,)
    assert check_feasible(scheme, ("edge", "moon"), state).constraints == (UNIQUE,)


def test_solve_placement_single_trusted_node():
    topology = Topology((Node("only", 10e12, 10e9, trusted=True),), ())
    scheme = make_split(six_layer_model(), [2, 4])
    placement, cost = solve_placement(scheme, topology.snapshot(0), WEIGHTS)
    assert placement == Placement.colocated("only", 3)
    assert cost.privacy_violations == 0


def test_solve_placement_no_trusted_node():
    topology = Topology((Node("a", 10e12, 10e9), Node("b", 10e12, 10e9)), ())
    scheme = make_split(six_layer_model(), [])
    with pytest.raises(NoFeasiblePlacement, match="trusted set is empty"):
        solve_placement(scheme, topology.snapshot(0), WEIGHTS)
    with pytest.raises(NoFeasiblePlacement):
        brute_force_oracle(scheme, topology.snapshot(0), WEIGHTS)


def test_solve_placement_prefers_colocation():
    nodes = tuple(Node(nid, 10e12, 10e9, trusted=True) for nid in "abc")
    topology = Topology.fully_connected(nodes, 100.0)
    scheme = make_split(six_layer_model(), [2, 4])
    state = topology.snapshot(0)
    placement, cost = solve_placement(scheme, state, CostWeights(1, 0, 0))
    assert len(placement.hosts()) == 1
    assert sum(cost.latency.tx_ms) == 0
    # ties go to the first node in topology order
    assert placement == Placement.colocated("a", 3)


def test_solve_placement_three_segments_asymmetric():
    nodes = (
        Node("edge-0", 5e12, 10e9, trusted=True, utilization=0.3),
        Node("edge-1", 15e12, 10e9, trusted=True),
        Node("cloud", 40e12, 100e9, is_cloud=True),
    )
    topology = Topology.fully_connected(nodes, 200.0, 2.0)
    profile = ModelProfile.uniform("heavy", 6, 40e9, 1e9, 1e6, (0, -1))
    scheme = make_split(profile, [1, 5])
    state = topology.snapshot(0, request_rate=2)
    weights = CostWeights(1, 0, 0)
    assert solve_placement(scheme, state, weights) == brute_force_oracle(
        scheme, state, weights
    )


@pytest.mark.parametrize("seed", range(200))
def test_solve_placement_matches_oracle(seed):
    _, scheme, state = random_instance(seed)
    try:
        expected = brute_force_oracle(scheme, state, WEIGHTS)
    except NoFeasiblePlacement:
        with pytest.raises(NoFeasiblePlacement):
            solve_placement(scheme, state, WEIGHTS)
        return

    placement, cost = solve_placement(scheme, state, WEIGHTS)
    assert placement == expected[0]
    assert cost.total == expected[1].total
    assert check_feasible(scheme, placement, state).feasible
    assert cost.privacy_violations == 0


@pytest.mark.parametrize("seed", range(200))
def test_greedy_never_beats_oracle(seed):
    _, scheme, state = random_instance(seed)
    try:
        placement, cost = greedy_placement(scheme, state, WEIGHTS)
    except NoFeasiblePlacement as exc:
        assert isinstance(exc, GreedyDeadEnd)
        return
    assert check_feasible(scheme, placement, state).feasible
    _, best = brute_force_oracle(scheme, state, WEIGHTS)
    assert cost.total >= best.total


def test_greedy_single_node_matches_oracle():
    topology = Topology((Node("only", 10e12, 10e9, trusted=True),), ())
    scheme = make_split(six_layer_model(), [3])
    state = topology.snapshot(0)
    assert greedy_placement(scheme, state, WEIGHTS) == brute_force_oracle(
        scheme, state, WEIGHTS
    )


def test_greedy_dead_end():
    # greedy puts the first segment on the fast trusted node and leaves no
    # room there for the privacy-critical second one
    profile = ModelProfile(
        "dead-end",
        (
            LayerProfile(0, 1e9, 1.5e9, 1e6),
            LayerProfile(1, 1e9, 1e9, 1e6, privacy_critical=True),
        ),
    )
    nodes = (
        Node("edge", 40e12, 2e9, trusted=True),
        Node("cloud", 10e12, 100e9, is_cloud=True),
    )
    topology = Topology(nodes, (link("edge", "cloud"),))
    scheme = make_split(profile, [1])
    state = topology.snapshot(0)

    with pytest.raises(GreedyDeadEnd, match="segment 1"):
        greedy_placement(scheme, state, WEIGHTS)
    placement, _ = solve_placement(scheme, state, WEIGHTS)
    assert placement == Placement(("cloud", "edge"))

    # unsplit, the model fits on no trusted node
    stuck = greedy_gap([(scheme, state), (make_split(profile, []), state)], WEIGHTS)
    assert (stuck.instances, stuck.dead_ends, stuck.infeasible) == (2, 1, 1)
    assert stuck.gaps == ()
    assert stuck.mean_gap == 0.0


def test_greedy_dead_end_is_no_feasible_placement():
    assert issubclass(GreedyDeadEnd, NoFeasiblePlacement)


def test_greedy_gap_over_random_instances(caplog):
    cases = [random_instance(seed)[1:] for seed in range(200)]
    with caplog.at_level(logging.INFO, logger="splitorch"):
        gap = greedy_gap(cases, WEIGHTS)

    assert gap.instances == 200
    assert len(gap.gaps) + gap.dead_ends + gap.infeasible == 200
    assert gap.gaps
    assert min(gap.gaps) >= 0.0
    assert gap.mean_gap == pytest.approx(np.mean(gap.gaps))
    assert 0.0 <= gap.mean_gap <= gap.max_gap
    assert "greedy: mean gap" in caplog.text


@pytest.mark.parametrize("seed", range(40))
@pytest.mark.parametrize("factor", [0.5, 4.0])
def test_argmin_invariant_under_weight_scaling(seed, factor):
    _, scheme, state = random_instance(seed)
    try:
        placement, cost = solve_placement(scheme, state, WEIGHTS)
    except NoFeasiblePlacement:
        return
    scaled, scaled_cost = solve_placement(scheme, state, WEIGHTS.scaled(factor))
    assert scaled == placement
    assert scaled_cost.total == pytest.approx(cost.total * factor)


@pytest.mark.parametrize("seed", range(60))
def test_split_revision_matches_joint_brute_force(seed):
    profile, _, state = random_instance(seed, max_layers=6)
    max_segments = min(3, profile.num_layers)
    expected = joint_brute_force(profile, max_segments, state, WEIGHTS)
    if expected is None:
        with pytest.raises(NoFeasiblePlacement, match="split scheme"):
            split_revision(profile, max_segments, state, WEIGHTS)
        return

    scheme, placement, cost = split_revision(profile, max_segments, state, WEIGHTS)
    assert scheme.boundaries == expected[0].boundaries
    assert placement == expected[1]
    assert cost.total == expected[2].total
    assert check_feasible(scheme, placement, state).feasible

    try:
        _, identity_cost = solve_placement(identity_split(profile), state, WEIGHTS)
    except NoFeasiblePlacement:
        return
    assert cost.total <= identity_cost.total


def test_split_revision_single_idle_node():
    topology = Topology((Node("only", 10e12, 10e9, trusted=True),), ())
    profile = six_layer_model()
    scheme, placement, _ = split_revision(profile, 4, topology.snapshot(0), WEIGHTS)
    assert scheme.boundaries == ()
    assert placement == Placement(("only",))


def test_split_revision_one_segment_is_solve_placement():
    profile = six_layer_model()
    state = edge_cloud_topology().snapshot(0, request_rate=5)
    scheme, placement, cost = split_revision(profile, 1, state, WEIGHTS)
    assert scheme.k == 1
    assert (placement, cost) == solve_placement(identity_split(profile), state, WEIGHTS)


def test_split_revision_moves_middle_to_idle_edge():
    # edge-a is busy; edge-b is idle, untrusted and small, one hop away over
    # a fast link; the cloud sits behind a congested backhaul
    nodes = (
        Node("edge-a", 10e12, 8e9, trusted=True, utilization=0.6),
        Node("edge-b", 10e12, 4e9),
        Node("cloud", 40e12, 100e9, is_cloud=True),
    )
    topology = Topology(
        nodes,
        (
            link("edge-a", "edge-b", 1000.0, 0.5),
            link("edge-a", "cloud", 20.0, 7.8),
            link("edge-b", "cloud", 20.0, 7.8),
        ),
    )
    profile = ModelProfile.uniform("six", 6, 20e9, 1e9, 1e6, (0, -1))
    state = topology.snapshot(0, request_rate=1)

    scheme, placement, cost = split_revision(profile, 3, state, WEIGHTS)
    expected = joint_brute_force(profile, 3, state, WEIGHTS)
    assert (scheme.boundaries, placement) == (expected[0].boundaries, expected[1])
    assert "cloud" not in placement.hosts()
    assert "edge-b" in placement.hosts()

    baseline = make_split(profile, [1, 5])
    baseline_cost = total_cost(baseline, ("edge-a", "cloud", "edge-a"), state, WEIGHTS)
    assert cost.total < baseline_cost.total
