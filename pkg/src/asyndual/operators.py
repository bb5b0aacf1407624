"""Block operators of the dual problem and the step-size certificate.

Each agent's dual block stacks a private multiplier (size ``m_dim``), a
cluster-consensus estimate (size ``n_i * m_dim``) and a coupling-constraint
estimate (size ``coupling_rows``).  The consensus operator ``Z`` maps the
full stacked dual state to per-edge differences of the consensual parts; a
fixed step size is certified by the eigenvalue condition

    1 / c  >=  max_ij h_ij + 2 * lambda_max(Z^T B Z),   B = (1 + d)^2 S,

which guarantees the two positive-semidefiniteness properties the
convergence analysis rests on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ValidationError
from .costs import ProblemModel, conjugate_argmin
from .topology import ClusterNetwork, GraphMatrices, build_matrices, neighbor_sets


def spectral_norm(matrix) -> float:
    """Largest singular value; zero for matrices with an empty dimension."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(matrix, 2))


class StateLayout:
    """Index bookkeeping for the stacked dual state and edge multipliers.

    Agents appear in relabeled order.  The edge-multiplier vector stacks the
    cluster-edge multipliers first (owner agent order, ascending neighbor)
    followed by the global-edge multipliers, matching the row order of the
    consensus operator.
    """

    def __init__(self, network: ClusterNetwork, m_dim: int, coupling_rows: int):
        self.network = network
        self.m_dim = m_dim
        self.coupling_rows = coupling_rows
        self.agents = list(network.agents())
        self.index = {key: k for k, key in enumerate(self.agents)}
        sets = neighbor_sets(network)
        self.sets = sets

        self.block_sizes = []
        self.alpha_offsets = []
        self.mu_slices = {}
        self.gamma_slices = {}
        self.theta_slices = {}
        off = 0
        for (i, j) in self.agents:
            n_i = network.cluster_sizes[i - 1]
            width = m_dim + n_i * m_dim + coupling_rows
            self.alpha_offsets.append(off)
            self.block_sizes.append(width)
            self.mu_slices[(i, j)] = slice(off, off + m_dim)
            self.gamma_slices[(i, j)] = slice(off + m_dim, off + m_dim + n_i * m_dim)
            self.theta_slices[(i, j)] = slice(off + m_dim + n_i * m_dim, off + width)
            off += width
        self.alpha_size = off

        # Offsets into the stacked consensual sub-vectors.
        self.gamma_stack_offsets = {}
        goff = 0
        for (i, j) in self.agents:
            self.gamma_stack_offsets[(i, j)] = goff
            goff += network.cluster_sizes[i - 1] * m_dim
        self.gamma_stack_size = goff
        self.theta_stack_offsets = {
            key: k * coupling_rows for k, key in enumerate(self.agents)
        }
        self.theta_stack_size = len(self.agents) * coupling_rows

        # Edge-multiplier offsets: cluster edges first, then global edges.
        self.xi_slices = {}
        woff = 0
        for (i, j) in self.agents:
            n_i = network.cluster_sizes[i - 1]
            for l in sets.omega[(i, j)]:
                self.xi_slices[(i, j, l)] = slice(woff, woff + n_i * m_dim)
                woff += n_i * m_dim
        self.xi_size = woff
        self.zeta_slices = {}
        for (i, j) in self.agents:
            for nuv in sets.omega_hat[(i, j)]:
                self.zeta_slices[(i, j, nuv)] = slice(woff, woff + coupling_rows)
                woff += coupling_rows
        self.omega_size = woff

        # Dense selectors from the stacked dual state to the consensual parts.
        self.gamma_selector = np.zeros((self.gamma_stack_size, self.alpha_size))
        self.theta_selector = np.zeros((self.theta_stack_size, self.alpha_size))
        for key in self.agents:
            gs = self.gamma_slices[key]
            row = self.gamma_stack_offsets[key]
            self.gamma_selector[row : row + gs.stop - gs.start, gs] = np.eye(gs.stop - gs.start)
            ts = self.theta_slices[key]
            row = self.theta_stack_offsets[key]
            self.theta_selector[row : row + coupling_rows, ts] = np.eye(coupling_rows)

    def block(self, alpha: np.ndarray, key) -> np.ndarray:
        k = self.index[key]
        off = self.alpha_offsets[k]
        return alpha[off : off + self.block_sizes[k]]


@dataclass(frozen=True)
class AgentOperators:
    """Per-agent operator blocks.

    ``conjugate_input`` maps the agent's dual block to the argument of the
    smooth conjugate; ``affine_row`` contributes the linear term of the dual
    cost.  ``h`` is the Lipschitz constant of the agent's smooth dual
    gradient, ``||W||_2^2 / sigma``.
    """

    key: tuple[int, int]
    conjugate_input: np.ndarray  # W block, m_dim x block width
    affine_row: np.ndarray  # D block as a flat vector
    select_mu: np.ndarray
    select_gamma: np.ndarray
    select_theta: np.ndarray
    laplacian_col: np.ndarray  # lifted Laplacian column block, n_i*m_dim x m_dim
    coupling_block: np.ndarray  # A_i / n_i, coupling_rows x m_dim
    b_share: np.ndarray
    sigma: float
    h: float

    def smooth_grad(self, alpha_block: np.ndarray, smooth) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of the agent's smooth dual cost; returns (y, grad)."""
        y = conjugate_argmin(smooth, self.conjugate_input @ alpha_block)
        return y, self.conjugate_input.T @ y + self.affine_row


@dataclass
class SystemOperators:
    """Assembled system-level matrices and diagonals.

    ``consensus`` is the stacked edge-difference operator; ``edge_weights``
    the per-row diagonal of S (edge multipliers' step weights).  ``step``
    and ``lipschitz`` are the per-coordinate diagonals of C and H over the
    stacked dual state.
    """

    layout: StateLayout
    matrices: GraphMatrices
    agent_ops: dict[tuple[int, int], AgentOperators]
    d: int
    pi: dict[tuple[int, int], float]
    consensus: np.ndarray  # Z
    agent_consensus: dict[tuple[int, int], np.ndarray]  # Z_ij blocks
    edge_weights: np.ndarray  # diag of S
    step: np.ndarray = None  # diag of C (per alpha coordinate)
    lipschitz: np.ndarray = None  # diag of H
    iota: float = 0.0
    gamma_drift: float = 0.0  # sum_ij 4 pi_ij d iota^2
    ZtSZ: np.ndarray = field(default=None, repr=False)
    ZtBZ: np.ndarray = field(default=None, repr=False)

    @property
    def relaxed_edge_weights(self) -> np.ndarray:
        """Diag of B = (1 + d)^2 S."""
        return (1.0 + self.d) ** 2 * self.edge_weights

    @property
    def inverse_edge_weights_relaxed(self) -> np.ndarray:
        """Diag of Q = (1 + d) S^{-1}."""
        return (1.0 + self.d) / self.edge_weights

    @property
    def h_max(self) -> float:
        return max(op.h for op in self.agent_ops.values())

    def step_vector(self) -> np.ndarray:
        return self.step

    def consensus_violation(self, alpha: np.ndarray) -> float:
        return float(np.linalg.norm(self.consensus @ alpha))

    def set_steps(self, c_by_agent: dict[tuple[int, int], float]) -> None:
        """Install per-agent step sizes into the per-coordinate diagonal."""
        layout = self.layout
        step = np.empty(layout.alpha_size)
        for k, key in enumerate(layout.agents):
            if c_by_agent[key] <= 0:
                raise ValidationError("step sizes must be positive")
            off = layout.alpha_offsets[k]
            step[off : off + layout.block_sizes[k]] = c_by_agent[key]
        self.step = step
        self.c = dict(c_by_agent)


def assemble(
    network: ClusterNetwork,
    problem: ProblemModel,
    d: int,
    pi=1.0,
    graph: GraphMatrices = None,
) -> SystemOperators:
    """Assemble all block operators for a problem on a network.

    ``pi`` is a positive scalar or per-agent mapping of edge-ascent weights;
    ``d`` the staleness bound (2 q + 1).  Step sizes are installed separately
    via :func:`certify_step_sizes` or :meth:`SystemOperators.set_steps`.
    """
    m_dim = problem.m_dim
    rows = problem.coupling.n_rows
    if graph is None:
        graph = build_matrices(network, m_dim, rows)
    layout = StateLayout(network, m_dim, rows)

    if np.isscalar(pi):
        pi_map = {key: float(pi) for key in layout.agents}
    else:
        pi_map = {key: float(pi[key]) for key in layout.agents}
    if any(v <= 0 for v in pi_map.values()):
        raise ValidationError("edge-ascent weights pi must be positive")

    agent_ops = {}
    for (i, j) in layout.agents:
        n_i = network.cluster_sizes[i - 1]
        lap_lift = np.kron(graph.laplacians[i - 1], np.eye(m_dim))
        lap_col = lap_lift[:, (j - 1) * m_dim : j * m_dim]
        a_block = problem.coupling.agent_block(i, j)
        width = m_dim + n_i * m_dim + rows
        w_block = np.hstack([-np.eye(m_dim), -lap_col.T, -a_block.T])
        d_row = np.zeros(width)
        d_row[m_dim + n_i * m_dim :] = problem.coupling.split[(i, j)]
        select_mu = np.hstack(
            [np.eye(m_dim), np.zeros((m_dim, n_i * m_dim)), np.zeros((m_dim, rows))]
        )
        select_gamma = np.hstack(
            [
                np.zeros((n_i * m_dim, m_dim)),
                np.eye(n_i * m_dim),
                np.zeros((n_i * m_dim, rows)),
            ]
        )
        select_theta = np.hstack(
            [np.zeros((rows, m_dim)), np.zeros((rows, n_i * m_dim)), np.eye(rows)]
        )
        sigma = problem.agent(i, j).smooth.sigma
        if sigma <= 0:
            raise ValidationError("smooth costs must be strongly convex")
        agent_ops[(i, j)] = AgentOperators(
            key=(i, j),
            conjugate_input=w_block,
            affine_row=d_row,
            select_mu=select_mu,
            select_gamma=select_gamma,
            select_theta=select_theta,
            laplacian_col=lap_col,
            coupling_block=a_block,
            b_share=problem.coupling.split[(i, j)],
            sigma=sigma,
            h=spectral_norm(w_block) ** 2 / sigma,
        )

    consensus = np.vstack(
        [
            graph.edge_diff_cluster @ layout.gamma_selector,
            graph.edge_diff_global @ layout.theta_selector,
        ]
    )
    agent_consensus = {}
    for key in layout.agents:
        agent_consensus[key] = np.vstack(
            [
                graph.owned_rows_cluster[key] @ layout.gamma_selector,
                graph.owned_rows_global[key] @ layout.theta_selector,
            ]
        )

    edge_weights = np.empty(layout.omega_size)
    for (i, j, l), sl in layout.xi_slices.items():
        edge_weights[sl] = pi_map[(i, j)]
    for (i, j, nuv), sl in layout.zeta_slices.items():
        edge_weights[sl] = pi_map[(i, j)]

    n_agents = network.n_agents
    iota = 0.0
    for key in layout.agents:
        term = n_agents * (
            spectral_norm(graph.owned_rows_cluster[key]) ** 2 * problem.boxes.iota_cluster**2
            + spectral_norm(graph.owned_rows_global[key]) ** 2 * problem.boxes.iota_coupling**2
        )
        iota = max(iota, float(np.sqrt(term)))
    gamma_drift = sum(4.0 * pi_map[key] * d * iota**2 for key in layout.agents)

    lipschitz = np.empty(layout.alpha_size)
    for k, key in enumerate(layout.agents):
        off = layout.alpha_offsets[k]
        lipschitz[off : off + layout.block_sizes[k]] = agent_ops[key].h

    ops = SystemOperators(
        layout=layout,
        matrices=graph,
        agent_ops=agent_ops,
        d=int(d),
        pi=pi_map,
        consensus=consensus,
        agent_consensus=agent_consensus,
        edge_weights=edge_weights,
        lipschitz=lipschitz,
        iota=iota,
        gamma_drift=gamma_drift,
    )
    ops.ZtSZ = consensus.T @ (edge_weights[:, None] * consensus)
    ops.ZtBZ = (1.0 + d) ** 2 * ops.ZtSZ
    return ops


def certify_step_sizes(ops: SystemOperators, c=None) -> dict:
    """Certify step sizes against the eigenvalue condition.

    With ``c`` omitted, installs the uniform bound
    ``c_max = 1 / (max_ij h_ij + 2 lambda_max(Z^T B Z))`` and verifies it;
    with a per-agent mapping or scalar ``c``, verifies that supplied choice.
    Returns a certificate report with the two minimum eigenvalues and pass
    flags (descent condition >= -1e-8, consensus condition > 1e-12).
    """
    h = ops.h_max
    if ops.ZtBZ.size:
        tau_max = float(np.linalg.eigvalsh((ops.ZtBZ + ops.ZtBZ.T) / 2.0)[-1])
    else:
        tau_max = 0.0
    c_max = 1.0 / (h + 2.0 * tau_max)

    if c is None:
        c_by_agent = {key: c_max for key in ops.layout.agents}
    elif np.isscalar(c):
        c_by_agent = {key: float(c) for key in ops.layout.agents}
    else:
        c_by_agent = {key: float(c[key]) for key in ops.layout.agents}
    ops.set_steps(c_by_agent)

    inv_c = np.diag(1.0 / ops.step)
    h_diag = np.diag(ops.lipschitz)
    descent = inv_c - h_diag - ops.ZtBZ
    consensus = inv_c - ops.ZtSZ
    min_eig_descent = float(np.linalg.eigvalsh((descent + descent.T) / 2.0)[0])
    min_eig_consensus = float(np.linalg.eigvalsh((consensus + consensus.T) / 2.0)[0])

    return {
        "c_max": c_max,
        "c": c_by_agent,
        "h_max": h,
        "tau_max_ZBZ": tau_max,
        "min_eig_descent": min_eig_descent,
        "min_eig_consensus": min_eig_consensus,
        "descent_ok": min_eig_descent >= -1e-8,
        "consensus_ok": min_eig_consensus > 1e-12,
    }
