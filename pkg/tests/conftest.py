"""Shared generators for randomized network/problem instances."""

import numpy as np
import pytest

from asyndual.costs import (
    AgentProblem,
    DualBoxes,
    NonsmoothCost,
    ProblemModel,
    SmoothCost,
    make_coupling,
)
from asyndual.topology import ClusterNetwork


def random_connected_edges(rng, n):
    """Random spanning tree plus a few extra edges over vertices 1..n."""
    edges = set()
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.add((u, v))
    for u in range(1, n + 1):
        for v in range(u + 1, n + 1):
            if (u, v) not in edges and rng.random() < 0.15:
                edges.add((u, v))
    return sorted(edges)


def random_network(rng, max_clusters=3, max_size=4):
    n_clusters = int(rng.integers(1, max_clusters + 1))
    sizes = [int(rng.integers(1, max_size + 1)) for _ in range(n_clusters)]
    intra = [random_connected_edges(rng, n) for n in sizes]
    total = sum(sizes)
    global_edges = random_connected_edges(rng, total) if total > 1 else []
    return ClusterNetwork.build(sizes, intra, global_edges)


def random_smooth(rng, m_dim, exp_prob=0.3):
    a = rng.uniform(0.3, 2.0, m_dim)
    b = rng.normal(scale=2.0, size=m_dim)
    if rng.random() < exp_prob:
        return SmoothCost(
            kind="quadratic_plus_exp",
            a=a,
            b=b,
            p=rng.uniform(0.0, 1.5, m_dim),
            r=rng.uniform(-1.2, 1.2, m_dim),
        )
    return SmoothCost(kind="quadratic", a=a, b=b)


def random_nonsmooth(rng, m_dim):
    if rng.random() < 0.25:
        return NonsmoothCost(kind="zero")
    lo = rng.uniform(-3.0, 0.5, m_dim)
    return NonsmoothCost(kind="box_indicator", lower=lo, upper=lo + rng.uniform(0.5, 4.0, m_dim))


def random_problem(rng, network=None, m_dim=None, b_rows=None, sense=None, exp_prob=0.3):
    network = network or random_network(rng)
    m_dim = m_dim or int(rng.integers(1, 3))
    b_rows = b_rows or int(rng.integers(1, 3))
    agents = {
        key: AgentProblem(
            smooth=random_smooth(rng, m_dim, exp_prob),
            nonsmooth=random_nonsmooth(rng, m_dim),
        )
        for key in network.agents()
    }
    sense = sense or ("le" if rng.random() < 0.5 else "eq")
    matrix = rng.uniform(0.3, 1.5, (b_rows, network.n_clusters * m_dim))
    rhs = rng.normal(scale=3.0, size=b_rows)
    coupling = make_coupling(matrix, rhs, sense, network, m_dim)
    boxes = DualBoxes(
        rho_cluster=50.0,
        rho_coupling=50.0,
        sense=sense,
        cluster_sizes=network.cluster_sizes,
        m_dim=m_dim,
        coupling_rows=b_rows,
    )
    return ProblemModel(network=network, agents=agents, coupling=coupling, boxes=boxes, m_dim=m_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
