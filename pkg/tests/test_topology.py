import numpy as np
import pytest
from hypothesis import given, strategies as st

from asyndual import ValidationError
from asyndual.topology import (
    ClusterNetwork,
    build_matrices,
    neighbor_sets,
    order_edges,
)

# The worked five-agent network: four clusters of sizes 1,1,1,2, one edge
# inside the last cluster, and five edges between relabeled agents.
EXAMPLE_SIZES = [1, 1, 1, 2]
EXAMPLE_INTRA = [[], [], [], [(1, 2)]]
EXAMPLE_GLOBAL = [(2, 4), (1, 2), (4, 5), (3, 4), (2, 5)]


@pytest.fixture
def example_network():
    return ClusterNetwork.build(EXAMPLE_SIZES, EXAMPLE_INTRA, EXAMPLE_GLOBAL)


class TestRelabel:
    def test_example_values(self, example_network):
        assert example_network.relabel(4, 1) == 4
        assert example_network.relabel(1, 1) == 1
        assert example_network.relabel(4, 2) == 5

    def test_bijection(self, example_network):
        images = [
            example_network.relabel(i, j)
            for i, j in example_network.agents()
        ]
        assert sorted(images) == list(range(1, 6))
        for g in range(1, 6):
            i, j = example_network.unlabel(g)
            assert example_network.relabel(i, j) == g

    def test_out_of_range(self, example_network):
        with pytest.raises(IndexError):
            example_network.relabel(5, 1)
        with pytest.raises(IndexError):
            example_network.relabel(4, 3)
        with pytest.raises(IndexError):
            example_network.relabel(0, 1)


class TestOrderEdges:
    def test_example_global_order(self):
        assert order_edges(EXAMPLE_GLOBAL) == [(1, 2), (2, 4), (2, 5), (3, 4), (4, 5)]

    def test_empty(self):
        assert order_edges([]) == []

    def test_singleton(self):
        assert order_edges([(1, 2)]) == [(1, 2)]

    def test_rejects_self_loop(self):
        with pytest.raises(ValidationError):
            order_edges([(3, 3)])

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            order_edges([(1, 2), (2, 1)])

    @given(
        st.lists(
            st.tuples(st.integers(1, 12), st.integers(1, 12)).filter(lambda e: e[0] != e[1]),
            max_size=20,
        )
    )
    def test_total_order(self, edges):
        unique = list({(min(e), max(e)) for e in edges})
        base = order_edges(unique)
        rng = np.random.default_rng(0)
        for _ in range(5):
            perm = [unique[k] for k in rng.permutation(len(unique))]
            assert order_edges(perm) == base


class TestNeighborSets:
    def test_example_values(self, example_network):
        sets = neighbor_sets(example_network)
        assert sets.omega[(1, 1)] == ()
        assert sets.omega[(2, 1)] == ()
        assert sets.omega[(3, 1)] == ()
        assert sets.omega[(4, 1)] == (2,)
        assert sets.omega[(4, 2)] == ()
        assert sets.omega_hat[(1, 1)] == (2,)
        assert sets.omega_hat[(2, 1)] == (4, 5)
        assert sets.omega_hat[(3, 1)] == (4,)
        assert sets.omega_hat[(4, 1)] == (5,)
        assert sets.omega_hat[(4, 2)] == ()

    def test_duality(self, example_network):
        sets = neighbor_sets(example_network)
        for (i, j), members in sets.omega.items():
            for l in members:
                assert j in sets.omega_sharp[(i, l)]
        for (i, j), members in sets.omega_hat.items():
            me = example_network.relabel(i, j)
            for k in members:
                assert me in sets.omega_hat_sharp[example_network.unlabel(k)]

    def test_union_recovers_edges(self, example_network):
        sets = neighbor_sets(example_network)
        rebuilt = sorted(
            (example_network.relabel(i, j), k)
            for (i, j), members in sets.omega_hat.items()
            for k in members
        )
        assert rebuilt == sorted(example_network.global_edges)
        for i, edges in enumerate(example_network.intra_edges, start=1):
            rebuilt = sorted(
                (j, l)
                for (ci, j), members in sets.omega.items()
                if ci == i
                for l in members
            )
            assert rebuilt == sorted(edges)


class TestBuildMatrices:
    def test_path2_laplacian_and_incidence(self):
        net = ClusterNetwork.build([2], [[(1, 2)]], [(1, 2)])
        mats = build_matrices(net, 1, 1)
        assert np.array_equal(mats.laplacians[0], [[1, -1], [-1, 1]])
        assert np.array_equal(mats.incidences[0], [[1], [-1]])

    def test_singleton_cluster_convention(self, example_network):
        mats = build_matrices(example_network, 1, 1)
        assert mats.incidences[0].shape == (1, 0)
        assert mats.owned_rows_cluster[(1, 1)].shape[0] == 0

    def test_example_global_blocks(self, example_network):
        b_rows = 2
        mats = build_matrices(example_network, 1, b_rows)
        eye = np.eye(b_rows)
        zero = np.zeros((b_rows, b_rows))
        expected_31 = np.hstack([zero, zero, eye, -eye, zero])
        assert np.array_equal(mats.owned_rows_global[(3, 1)], expected_31)
        expected_21 = np.vstack(
            [
                np.hstack([zero, eye, zero, -eye, zero]),
                np.hstack([zero, eye, zero, zero, -eye]),
            ]
        )
        assert np.array_equal(mats.owned_rows_global[(2, 1)], expected_21)

    def test_example_cluster_block(self, example_network):
        m_dim = 2
        mats = build_matrices(example_network, m_dim, 1)
        width = 2 * m_dim  # cluster 4 has two agents
        eye = np.eye(width)
        zero_small = np.zeros((width, m_dim))
        expected_41 = np.hstack([zero_small, zero_small, zero_small, eye, -eye])
        assert np.array_equal(mats.owned_rows_cluster[(4, 1)], expected_41)

    def test_laplacian_is_incidence_gram(self, example_network):
        for net in [
            example_network,
            ClusterNetwork.build(
                [3, 2], [[(1, 2), (2, 3)], [(1, 2)]], [(1, 2), (2, 3), (3, 4), (4, 5)]
            ),
        ]:
            mats = build_matrices(net, 1, 1)
            for lap, inc in zip(mats.laplacians, mats.incidences):
                assert np.array_equal(lap, inc @ inc.T)
            glap = mats.global_incidence @ mats.global_incidence.T
            assert np.all(glap.sum(axis=1) == 0)

    def test_incidence_columns_sum_to_zero(self, example_network):
        mats = build_matrices(example_network, 1, 1)
        for inc in list(mats.incidences) + [mats.global_incidence]:
            if inc.size:
                assert np.all(inc.sum(axis=0) == 0)

    def test_consensual_vectors_in_kernel(self, example_network):
        rng = np.random.default_rng(1)
        m_dim, b_rows = 2, 1
        mats = build_matrices(example_network, m_dim, b_rows)
        gamma = []
        for i, n in enumerate(example_network.cluster_sizes, start=1):
            common = rng.normal(size=n * m_dim)
            gamma += [common] * n
        gamma = np.concatenate(gamma)
        assert np.linalg.norm(mats.edge_diff_cluster @ gamma) == 0
        theta = np.tile(rng.normal(size=b_rows), example_network.n_agents)
        assert np.linalg.norm(mats.edge_diff_global @ theta) == 0
        # Breaking consensus anywhere shows up in the residual.
        theta[0] += 1.0
        assert np.linalg.norm(mats.edge_diff_global @ theta) > 0.5

    def test_blocks_stack_to_full_operator(self, example_network):
        mats = build_matrices(example_network, 2, 3)
        stacked = np.vstack(
            [mats.owned_rows_cluster[key] for key in example_network.agents()]
        )
        assert np.array_equal(stacked, mats.edge_diff_cluster)
        stacked = np.vstack(
            [mats.owned_rows_global[key] for key in example_network.agents()]
        )
        assert np.array_equal(stacked, mats.edge_diff_global)


class TestValidation:
    def test_disconnected_global_graph(self):
        with pytest.raises(ValidationError):
            ClusterNetwork.build([1, 1, 1], [[], [], []], [(1, 2)])

    def test_disconnected_cluster(self):
        with pytest.raises(ValidationError):
            ClusterNetwork.build([3], [[(1, 2)]], [(1, 2), (2, 3)])

    def test_edge_outside_cluster(self):
        with pytest.raises(ValidationError):
            ClusterNetwork.build([2], [[(1, 3)]], [(1, 2)])

    def test_bad_sizes(self):
        with pytest.raises(ValidationError):
            ClusterNetwork.build([0], [[]], [])
