import random

import pytest

from splitorch import config
from splitorch.infra import Link, Node, Topology
from splitorch.model import LayerProfile, ModelProfile, enumerate_splits, make_split
from splitorch.scenario import bundled_config_path, load_config
from splitorch.simulator import compare_static_adaptive
from splitorch.solver import brute_force_oracle
from splitorch.utils import NoFeasiblePlacement

SWEEP = (20, 50, 100, 200)


@pytest.fixture
def enable_debug():
    config.debug = True
    try:
        yield
    finally:
        config.debug = False


def link(a, b, bandwidth=100.0, delay=0.0, backhaul=True):
    return Link(frozenset((a, b)), bandwidth, delay, backhaul)


def six_layer_model(critical=(0, -1)):
    """1 GFLOP, 1 GB and 1 Mbit per layer"""
    return ModelProfile.uniform("six", 6, 1e9, 1e9, 1e6, critical)


def edge_cloud_topology(bandwidth=100.0, cloud_trusted=False, edge_util=0.0):
    """One trusted edge node linked to a faster, roomier cloud"""
    nodes = (
        Node("edge", 10e12, 8e9, trusted=True, utilization=edge_util),
        Node("cloud", 40e12, 100e9, is_cloud=True, trusted=cloud_trusted),
    )
    return Topology(nodes, (link("edge", "cloud", bandwidth, 5.0),))


def random_instance(seed, max_edge=3, max_layers=6, max_segments=4):
    """A random model, topology and scheme with up to `max_edge` edge nodes
    plus the cloud

    Returns:
        `(profile, scheme, state)`
    """
    rng = random.Random(seed)
    m = rng.randint(1, max_layers)
    profile = ModelProfile(
        f"random-{seed}",
        tuple(
            LayerProfile(
                i,
                rng.uniform(1e9, 50e9),
                rng.uniform(0.1e9, 2e9),
                rng.uniform(1e5, 5e6),
                rng.random() < 0.25,
            )
            for i in range(m)
        ),
    )

    nodes = [
        Node(
            f"edge-{i}",
            rng.uniform(5e12, 30e12),
            rng.uniform(1e9, 8e9),
            trusted=rng.random() < 0.7,
            utilization=rng.uniform(0.0, 0.6),
        )
        for i in range(rng.randint(1, max_edge))
    ]
    nodes.append(
        Node("cloud", 20e12, 100e9, is_cloud=True, trusted=rng.random() < 0.2)
    )
    links = [
        link(a.node_id, b.node_id, rng.uniform(10, 500), rng.uniform(0, 10))
        for i, a in enumerate(nodes)
        for b in nodes[i + 1:]
        if rng.random() < 0.8
    ]
    topology = Topology(tuple(nodes), tuple(links))

    k = rng.randint(1, min(max_segments, m))
    scheme = make_split(profile, sorted(rng.sample(range(1, m), k - 1)))
    state = topology.snapshot(0.0, request_rate=rng.uniform(0, 10))
    return profile, scheme, state


def joint_brute_force(profile, max_segments, state, weights):
    """Exhaustive search over every scheme and every placement"""
    best = None
    for scheme in enumerate_splits(profile, max_segments):
        try:
            placement, cost = brute_force_oracle(scheme, state, weights)
        except NoFeasiblePlacement:
            continue
        if best is None or cost.total < best[2].total:
            best = (scheme, placement, cost)
    return best


@pytest.fixture(scope="session")
def urban():
    return load_config(bundled_config_path("urban_5g_mec"))


@pytest.fixture(scope="session")
def urban_sweep(urban):
    return compare_static_adaptive(urban, SWEEP)
