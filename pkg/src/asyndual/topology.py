"""Two-level graph structure: clusters inside a global communication graph.

Vertices are 1-based.  Agent ``j`` of cluster ``i`` carries the global
(relabeled) index ``sum(sizes before i) + j``.  Edge lists are kept in a
canonical order (sorted by smaller endpoint, then larger endpoint) so that
edge-indexed quantities are reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ValidationError


def order_edges(edges) -> list[tuple[int, int]]:
    """Canonically order an undirected edge list.

    Each edge is normalized to ``(min, max)`` and the list is sorted by the
    smaller endpoint first, the larger endpoint second.  Self-loops and
    duplicate edges are rejected.
    """
    normalized = []
    for edge in edges:
        u, v = int(edge[0]), int(edge[1])
        if u == v:
            raise ValidationError(f"self-loop edge ({u},{v}) is not allowed")
        normalized.append((min(u, v), max(u, v)))
    if len(set(normalized)) != len(normalized):
        raise ValidationError("duplicate edges in edge list")
    return sorted(normalized)


def _check_connected(n_vertices: int, edges) -> bool:
    """Union-find connectivity check over vertices 1..n_vertices."""
    if n_vertices <= 1:
        return True
    parent = list(range(n_vertices + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    root = find(1)
    return all(find(v) == root for v in range(2, n_vertices + 1))


@dataclass(frozen=True)
class ClusterNetwork:
    """Validated multi-cluster network.

    Attributes:
        cluster_sizes: number of agents per cluster.
        intra_edges: per-cluster canonical edge lists over local indices.
        global_edges: canonical edge list over relabeled indices.
    """

    cluster_sizes: tuple[int, ...]
    intra_edges: tuple[tuple[tuple[int, int], ...], ...]
    global_edges: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, cluster_sizes, intra_edges, global_edges) -> "ClusterNetwork":
        sizes = tuple(int(s) for s in cluster_sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValidationError("cluster sizes must be positive integers")
        if len(intra_edges) != len(sizes):
            raise ValidationError(
                f"expected {len(sizes)} intra-cluster edge lists, got {len(intra_edges)}"
            )
        ordered_intra = []
        for i, (size, edges) in enumerate(zip(sizes, intra_edges), start=1):
            ordered = order_edges(edges)
            for u, v in ordered:
                if not (1 <= u <= size and 1 <= v <= size):
                    raise ValidationError(
                        f"edge ({u},{v}) outside cluster {i} vertex range 1..{size}"
                    )
            if not _check_connected(size, ordered):
                raise ValidationError(f"cluster {i} graph is not connected")
            ordered_intra.append(tuple(ordered))
        n_total = sum(sizes)
        ordered_global = order_edges(global_edges)
        for u, v in ordered_global:
            if not (1 <= u <= n_total and 1 <= v <= n_total):
                raise ValidationError(
                    f"global edge ({u},{v}) outside vertex range 1..{n_total}"
                )
        if not _check_connected(n_total, ordered_global):
            raise ValidationError("global graph is not connected")
        return cls(sizes, tuple(ordered_intra), tuple(ordered_global))

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def n_agents(self) -> int:
        return sum(self.cluster_sizes)

    def relabel(self, cluster: int, local: int) -> int:
        """Global index of agent ``local`` in cluster ``cluster`` (both 1-based)."""
        if not 1 <= cluster <= self.n_clusters:
            raise IndexError(f"cluster index {cluster} out of range 1..{self.n_clusters}")
        size = self.cluster_sizes[cluster - 1]
        if not 1 <= local <= size:
            raise IndexError(
                f"agent index {local} out of range 1..{size} in cluster {cluster}"
            )
        return sum(self.cluster_sizes[: cluster - 1]) + local

    def unlabel(self, global_index: int) -> tuple[int, int]:
        """Inverse of :meth:`relabel`."""
        if not 1 <= global_index <= self.n_agents:
            raise IndexError(f"global index {global_index} out of range 1..{self.n_agents}")
        remaining = global_index
        for i, size in enumerate(self.cluster_sizes, start=1):
            if remaining <= size:
                return i, remaining
            remaining -= size
        raise IndexError(global_index)  # unreachable

    def agents(self):
        """All (cluster, local) pairs in relabeled order."""
        for i, size in enumerate(self.cluster_sizes, start=1):
            for j in range(1, size + 1):
                yield i, j


@dataclass(frozen=True)
class NeighborSets:
    """Directional neighbor sets used by the consensus updates.

    ``omega[(i, j)]`` holds the higher-indexed intra-cluster neighbors of
    agent ``(i, j)``; ``omega_sharp`` the lower-indexed ones.  The ``_hat``
    variants are the analogous sets over the relabeled global graph.
    """

    omega: dict[tuple[int, int], tuple[int, ...]]
    omega_sharp: dict[tuple[int, int], tuple[int, ...]]
    omega_hat: dict[tuple[int, int], tuple[int, ...]]
    omega_hat_sharp: dict[tuple[int, int], tuple[int, ...]]


def neighbor_sets(network: ClusterNetwork) -> NeighborSets:
    """Build all four directional neighbor-set families of a network."""
    omega = {key: [] for key in network.agents()}
    omega_sharp = {key: [] for key in network.agents()}
    omega_hat = {key: [] for key in network.agents()}
    omega_hat_sharp = {key: [] for key in network.agents()}

    for i, edges in enumerate(network.intra_edges, start=1):
        for j, l in edges:  # canonical order gives j < l
            omega[(i, j)].append(l)
            omega_sharp[(i, l)].append(j)
    for u, v in network.global_edges:  # u < v in relabeled indices
        omega_hat[network.unlabel(u)].append(v)
        omega_hat_sharp[network.unlabel(v)].append(u)

    freeze = lambda d: {k: tuple(sorted(v)) for k, v in d.items()}
    return NeighborSets(
        omega=freeze(omega),
        omega_sharp=freeze(omega_sharp),
        omega_hat=freeze(omega_hat),
        omega_hat_sharp=freeze(omega_hat_sharp),
    )


def _incidence(n_vertices: int, edges) -> np.ndarray:
    """Vertex-by-edge incidence matrix; +1 at the smaller endpoint.

    A graph with one vertex and no edge yields the 1-by-0 matrix.
    """
    mat = np.zeros((n_vertices, len(edges)), dtype=int)
    for k, (u, v) in enumerate(edges):
        mat[u - 1, k] = 1
        mat[v - 1, k] = -1
    return mat


def _laplacian(n_vertices: int, edges) -> np.ndarray:
    mat = np.zeros((n_vertices, n_vertices), dtype=int)
    for u, v in edges:
        mat[u - 1, u - 1] += 1
        mat[v - 1, v - 1] += 1
        mat[u - 1, v - 1] -= 1
        mat[v - 1, u - 1] -= 1
    return mat


@dataclass(frozen=True)
class GraphMatrices:
    """Incidence/Laplacian matrices and their dual-space lifts.

    ``edge_diff_cluster`` maps the stacked per-agent cluster-consensus
    variables (one block of size ``n_i * m_dim`` per agent) to per-edge
    differences; ``edge_diff_global`` does the same for the network-wide
    variables (blocks of size ``coupling_rows``).  ``owned_rows_*[(i, j)]``
    are the rows of those maps for the edges whose smaller endpoint is agent
    ``(i, j)``; the blocks have zero rows when the agent owns no edge.
    """

    network: ClusterNetwork
    m_dim: int
    coupling_rows: int
    laplacians: tuple[np.ndarray, ...]
    incidences: tuple[np.ndarray, ...]
    global_incidence: np.ndarray
    edge_diff_cluster: np.ndarray
    edge_diff_global: np.ndarray
    owned_rows_cluster: dict[tuple[int, int], np.ndarray] = field(repr=False, default=None)
    owned_rows_global: dict[tuple[int, int], np.ndarray] = field(repr=False, default=None)


def build_matrices(network: ClusterNetwork, m_dim: int, coupling_rows: int) -> GraphMatrices:
    """Materialize every graph matrix for primal dimension ``m_dim`` and
    ``coupling_rows`` coupling constraints."""
    if m_dim < 1 or coupling_rows < 1:
        raise ValidationError("m_dim and coupling_rows must be >= 1")
    sizes = network.cluster_sizes
    laplacians = tuple(_laplacian(n, e) for n, e in zip(sizes, network.intra_edges))
    incidences = tuple(_incidence(n, e) for n, e in zip(sizes, network.intra_edges))
    global_incidence = _incidence(network.n_agents, network.global_edges)

    # Lift per cluster: incidence^T kron I_{n_i * m_dim}, then block diagonal.
    gamma_block_sizes = [n * n * m_dim for n in sizes]  # n_i agents, each n_i*m_dim wide
    total_gamma = sum(gamma_block_sizes)
    row_counts = [len(e) * n * m_dim for n, e in zip(sizes, network.intra_edges)]
    edge_diff_cluster = np.zeros((sum(row_counts), total_gamma))
    row0 = 0
    col0 = 0
    for n, edges in zip(sizes, network.intra_edges):
        width = n * m_dim
        lift = np.kron(_incidence(n, edges).T, np.eye(width))
        edge_diff_cluster[row0 : row0 + lift.shape[0], col0 : col0 + lift.shape[1]] = lift
        row0 += lift.shape[0]
        col0 += lift.shape[1]

    edge_diff_global = np.kron(global_incidence.T, np.eye(coupling_rows))

    # Per-agent owned-edge row blocks.  Canonical edge order groups edges by
    # their smaller endpoint, so each agent's rows are contiguous.
    sets = neighbor_sets(network)
    owned_cluster: dict[tuple[int, int], np.ndarray] = {}
    row0 = 0
    for i, n in enumerate(sizes, start=1):
        width = n * m_dim
        for j in range(1, n + 1):
            rows = len(sets.omega[(i, j)]) * width
            owned_cluster[(i, j)] = edge_diff_cluster[row0 : row0 + rows, :]
            row0 += rows
    owned_global: dict[tuple[int, int], np.ndarray] = {}
    row0 = 0
    for key in network.agents():
        rows = len(sets.omega_hat[key]) * coupling_rows
        owned_global[key] = edge_diff_global[row0 : row0 + rows, :]
        row0 += rows

    return GraphMatrices(
        network=network,
        m_dim=m_dim,
        coupling_rows=coupling_rows,
        laplacians=laplacians,
        incidences=incidences,
        global_incidence=global_incidence,
        edge_diff_cluster=edge_diff_cluster,
        edge_diff_global=edge_diff_global,
        owned_rows_cluster=owned_cluster,
        owned_rows_global=owned_global,
    )
