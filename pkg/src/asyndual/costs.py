"""Per-agent cost components and the cluster-coupling constraint.

Smooth costs are strongly convex and enter the dual through their Fenchel
conjugate, evaluated by an exact argmin oracle.  Non-smooth costs enter
through the conjugate proximal mapping, computed with the extended Moreau
decomposition ``prox_c[g*](s) = s - c * prox_{1/c}[g](s / c)`` so only the
primal prox (a box projection) is ever needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import NumericalError, ValidationError

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITERS = 100


@dataclass(frozen=True)
class SmoothCost:
    """Separable strongly convex cost, ``sum_k a_k x_k^2 + b_k x_k (+ p_k e^{r_k x_k})``.

    Attributes:
        kind: "quadratic" or "quadratic_plus_exp".
        a: quadratic coefficients, all positive.
        b: linear coefficients.
        p: exponential weights (>= 0), zero array for the quadratic kind.
        r: exponential rates, zero array for the quadratic kind.
    """

    kind: str
    a: np.ndarray
    b: np.ndarray
    p: np.ndarray = None
    r: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if self.kind not in ("quadratic", "quadratic_plus_exp"):
            raise ValidationError(f"unknown smooth cost kind {self.kind!r}")
        dim = self.a.shape[0]
        if self.b.shape[0] != dim:
            raise ValidationError("smooth cost coefficient lengths differ")
        if np.any(self.a <= 0):
            raise ValidationError("quadratic coefficients must be positive")
        p = np.zeros(dim) if self.p is None else np.atleast_1d(np.asarray(self.p, dtype=float))
        r = np.zeros(dim) if self.r is None else np.atleast_1d(np.asarray(self.r, dtype=float))
        if self.kind == "quadratic":
            p = np.zeros(dim)
            r = np.zeros(dim)
        if np.any(p < 0):
            raise ValidationError("exponential weights must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def sigma(self) -> float:
        """Strong-convexity modulus: twice the smallest quadratic coefficient."""
        return 2.0 * float(np.min(self.a))

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        out = float(np.dot(self.a, x * x) + np.dot(self.b, x))
        if self.kind == "quadratic_plus_exp":
            out += float(np.dot(self.p, np.exp(self.r * x)))
        return out

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = 2.0 * self.a * x + self.b
        if self.kind == "quadratic_plus_exp":
            g = g + self.p * self.r * np.exp(self.r * x)
        return g


def _exp_stationary_root(a: float, b: float, p: float, r: float, w: float) -> float:
    """Solve 2a*y + b + p*r*exp(r*y) = w by safeguarded Newton.

    The left-hand side is strictly increasing (a > 0, p >= 0), so the root is
    unique.  A bracketing interval doubles out from the quadratic-only guess;
    Newton steps that leave the bracket or make slow progress (the
    exponential wall makes plain Newton creep) fall back to bisection.
    """
    if p == 0.0 or r == 0.0:
        return (w - b) / (2.0 * a)

    def residual(y):
        return 2.0 * a * y + b + p * r * math.exp(min(r * y, 700.0)) - w

    lo = hi = (w - b) / (2.0 * a)
    step = 1.0 + abs(lo)
    while residual(lo) > 0.0:
        lo -= step
        step *= 2.0
    step = 1.0 + abs(hi)
    while residual(hi) < 0.0:
        hi += step
        step *= 2.0

    def polish(y):
        # One trailing Newton step pins the root to machine precision, so
        # independent solver paths land on bit-comparable minimizers.
        slope = 2.0 * a + p * r * r * math.exp(min(r * y, 700.0))
        return y - residual(y) / slope

    y = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    best = y
    best_res = abs(residual(y))
    for _ in range(2 * _NEWTON_MAX_ITERS):
        res = residual(y)
        if abs(res) < best_res:
            best, best_res = y, abs(res)
        if abs(res) < _NEWTON_TOL:
            return polish(y)
        if res > 0.0:
            hi = y
        else:
            lo = y
        slope = 2.0 * a + p * r * r * math.exp(min(r * y, 700.0))
        y_next = y - res / slope
        if not (lo < y_next < hi) or abs(2.0 * res / slope) > dx_old:
            y_next = 0.5 * (lo + hi)
        dx_old = abs(y_next - y)
        if dx_old == 0.0:
            break
        y = y_next
    # The bracket may collapse to adjacent floats before the absolute target
    # is met on large-magnitude inputs; accept a scale-relative residual.
    scale = max(1.0, abs(w), abs(b), 2.0 * a * abs(best))
    if best_res < _NEWTON_TOL * scale:
        return polish(best)
    raise NumericalError("conjugate argmin Newton did not converge")


def conjugate_argmin(f: SmoothCost, w) -> np.ndarray:
    """Unique minimizer of ``f(n) - w.n`` (the conjugate's gradient at w)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if f.kind == "quadratic":
        return (w - f.b) / (2.0 * f.a)
    return np.array(
        [
            _exp_stationary_root(f.a[k], f.b[k], f.p[k], f.r[k], w[k])
            for k in range(f.dim)
        ]
    )


def conjugate_value(f: SmoothCost, w) -> float:
    """Fenchel conjugate ``f*(w) = w.y - f(y)`` at ``y = conjugate_argmin(f, w)``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    y = conjugate_argmin(f, w)
    return float(np.dot(w, y)) - f.value(y)


@dataclass(frozen=True)
class NonsmoothCost:
    """Non-smooth cost: a box indicator or the zero function.

    The zero kind conjugates to the indicator of the origin, so its conjugate
    prox pins the corresponding dual block at zero.
    """

    kind: str
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("box_indicator", "zero"):
            raise ValidationError(f"unknown non-smooth cost kind {self.kind!r}")
        if self.kind == "box_indicator":
            lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
            hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
            if lo.shape != hi.shape:
                raise ValidationError("box bound lengths differ")
            if np.any(lo > hi):
                raise ValidationError("empty box: lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return x.copy()
        return np.clip(x, self.lower, self.upper)

    def support(self, mu, tol: float = 1e-9) -> float:
        """Conjugate value g*(mu): box support function, or the {0} indicator."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.kind == "zero":
            return 0.0 if float(np.max(np.abs(mu), initial=0.0)) <= tol else math.inf
        return float(np.sum(np.maximum(self.lower * mu, self.upper * mu)))


def prox_conjugate_nonsmooth(g: NonsmoothCost, s, c: float) -> np.ndarray:
    """Proximal step on the conjugate g*, via extended Moreau decomposition."""
    if c <= 0:
        raise ValidationError("prox step must be positive")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if g.kind == "zero":
        return np.zeros_like(s)
    return s - c * np.clip(s / c, g.lower, g.upper)


@dataclass(frozen=True)
class CouplingConstraint:
    """Affine coupling ``A x (<= or =) b`` across the clusters' decisions.

    ``split`` assigns each agent a share ``b_ij`` with the shares summing to
    ``b`` exactly; the lifted per-agent column blocks ``A_i / n_i`` reproduce
    ``A x`` on any cluster-consensual estimate vector.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    sense: str
    split: dict[tuple[int, int], np.ndarray]
    cluster_sizes: tuple[int, ...]
    m_dim: int

    def __post_init__(self):
        if self.sense not in ("le", "eq"):
            raise ValidationError(f"coupling sense must be 'le' or 'eq', got {self.sense!r}")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def cluster_block(self, cluster: int) -> np.ndarray:
        """Column block of A for one cluster (shape coupling_rows x m_dim)."""
        m = self.m_dim
        return self.matrix[:, (cluster - 1) * m : cluster * m]

    def lifted_cluster_block(self, cluster: int) -> np.ndarray:
        """(1^T kron A_i) / n_i, acting on the cluster's stacked estimates."""
        n_i = self.cluster_sizes[cluster - 1]
        return np.kron(np.ones((1, n_i)), self.cluster_block(cluster)) / n_i

    def agent_block(self, cluster: int, local: int) -> np.ndarray:
        """Per-agent block A_i / n_i."""
        del local  # identical for every agent of the cluster
        return self.cluster_block(cluster) / self.cluster_sizes[cluster - 1]


def split_b(rhs, network, user_split=None) -> dict[tuple[int, int], np.ndarray]:
    """Distribute the coupling right-hand side over agents.

    The default is an equal split; a user-supplied per-agent split is
    accepted when it sums back to ``rhs`` within 1e-12.
    """
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    agents = list(network.agents())
    if user_split is None:
        share = rhs / len(agents)
        return {key: share.copy() for key in agents}
    shares = [np.atleast_1d(np.asarray(s, dtype=float)) for s in user_split]
    if len(shares) != len(agents):
        raise ValidationError(
            f"split has {len(shares)} entries for {len(agents)} agents"
        )
    total = np.sum(shares, axis=0)
    if np.max(np.abs(total - rhs)) > 1e-12:
        raise ValidationError("user split does not sum to the coupling rhs")
    return {key: share for key, share in zip(agents, shares)}


def make_coupling(matrix, rhs, sense, network, m_dim, user_split=None) -> CouplingConstraint:
    """Validate and assemble a coupling constraint for a network."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    n_cols = network.n_clusters * m_dim
    if matrix.shape[1] != n_cols:
        raise ValidationError(
            f"coupling matrix has {matrix.shape[1]} columns, expected {n_cols}"
        )
    if matrix.shape[0] != rhs.shape[0]:
        raise ValidationError("coupling matrix and rhs row counts differ")
    split = split_b(rhs, network, user_split)
    return CouplingConstraint(
        matrix=matrix,
        rhs=rhs,
        sense=sense,
        split=split,
        cluster_sizes=network.cluster_sizes,
        m_dim=m_dim,
    )


@dataclass(frozen=True)
class DualBoxes:
    """Compact boxes confining the consensual dual blocks.

    Cluster boxes are symmetric with radius ``rho_cluster``; the coupling box
    is ``[0, rho_coupling]`` per row for inequality coupling and symmetric
    for equality coupling (free multiplier).
    """

    rho_cluster: float
    rho_coupling: float
    sense: str
    cluster_sizes: tuple[int, ...]
    m_dim: int
    coupling_rows: int

    def __post_init__(self):
        if self.rho_cluster <= 0 or self.rho_coupling <= 0:
            raise ValidationError("dual box radii must be positive")

    def cluster_bounds(self, cluster: int) -> tuple[np.ndarray, np.ndarray]:
        dim = self.cluster_sizes[cluster - 1] * self.m_dim
        return -self.rho_cluster * np.ones(dim), self.rho_cluster * np.ones(dim)

    def coupling_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        hi = self.rho_coupling * np.ones(self.coupling_rows)
        lo = np.zeros(self.coupling_rows) if self.sense == "le" else -hi
        return lo, hi

    @property
    def iota_cluster(self) -> float:
        """Largest Euclidean norm over all cluster boxes (corner of the biggest)."""
        dim = max(self.cluster_sizes) * self.m_dim
        return self.rho_cluster * math.sqrt(dim)

    @property
    def iota_coupling(self) -> float:
        return self.rho_coupling * math.sqrt(self.coupling_rows)


@dataclass(frozen=True)
class AgentProblem:
    """One agent's cost pair."""

    smooth: SmoothCost
    nonsmooth: NonsmoothCost


@dataclass(frozen=True)
class ProblemModel:
    """Everything the solver needs about the optimization problem itself."""

    network: "ClusterNetwork" = field(repr=False, default=None)
    agents: dict[tuple[int, int], AgentProblem] = None
    coupling: CouplingConstraint = None
    boxes: DualBoxes = None
    m_dim: int = 1

    def agent(self, cluster: int, local: int) -> AgentProblem:
        return self.agents[(cluster, local)]

    def cluster_primal_box(self, cluster: int) -> tuple[np.ndarray, np.ndarray]:
        """Intersection of the cluster's agent boxes (the feasible set of x_i)."""
        lo = np.full(self.m_dim, -np.inf)
        hi = np.full(self.m_dim, np.inf)
        n_i = self.network.cluster_sizes[cluster - 1]
        for j in range(1, n_i + 1):
            g = self.agents[(cluster, j)].nonsmooth
            if g.kind == "box_indicator":
                lo = np.maximum(lo, g.lower)
                hi = np.minimum(hi, g.upper)
        if np.any(lo > hi):
            raise ValidationError(f"cluster {cluster} agent boxes have empty intersection")
        return lo, hi

    def cluster_cost_value(self, cluster: int, x) -> float:
        """Summed smooth cost of a cluster at a common decision x."""
        n_i = self.network.cluster_sizes[cluster - 1]
        return sum(self.agents[(cluster, j)].smooth.value(x) for j in range(1, n_i + 1))

    def cluster_cost_grad(self, cluster: int, x) -> np.ndarray:
        n_i = self.network.cluster_sizes[cluster - 1]
        return sum(self.agents[(cluster, j)].smooth.grad(x) for j in range(1, n_i + 1))
