"""Centralized reference solvers, independent of the distributed pipeline.

Three routes of increasing generality: an equal-marginal bisection on the
coupling multiplier (exact for separable costs with one coupling row), a
projected-gradient solver with the same outer bisection but an iterative
inner minimizer, and an exhaustive grid search for up to three clusters.
They share nothing with the solver's prox/conjugate code beyond plain cost
evaluation, so their agreement is meaningful evidence of correctness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import NumericalError, ValidationError
from .costs import ProblemModel

_BISECT_TOL = 1e-10
_BISECT_MAX = 200


@dataclass
class OracleSolution:
    """Centralized optimum with optimality certificates."""

    x: np.ndarray  # one decision per cluster (m_dim == 1)
    y: dict  # per-agent copies, equal to the cluster decision
    multiplier: np.ndarray
    objective: float
    method: str
    stationarity_residual: float
    coupling_residual: float

    @property
    def e(self) -> dict:
        """Per-agent slack copies; they coincide with ``y`` at an optimum."""
        return self.y


def _coupling_row(problem: ProblemModel) -> np.ndarray:
    coupling = problem.coupling
    if problem.m_dim != 1 or coupling.n_rows != 1:
        raise ValidationError("oracle route requires a single 1-D coupling row")
    row = np.array([coupling.cluster_block(i)[0, 0] for i in range(1, len(coupling.cluster_sizes) + 1)])
    if np.any(row <= 0):
        raise ValidationError("oracle route requires positive coupling coefficients")
    return row


def _boxes(problem: ProblemModel) -> tuple[np.ndarray, np.ndarray]:
    n = problem.network.n_clusters
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(1, n + 1):
        l, h = problem.cluster_primal_box(i)
        lo[i - 1], hi[i - 1] = l[0], h[0]
    return lo, hi


def _marginal(problem: ProblemModel, cluster: int, x: float) -> float:
    return float(problem.cluster_cost_grad(cluster, np.array([x]))[0])


def _stationary_point(problem, cluster, target, lo, hi) -> float:
    """Clipped root of (cluster marginal cost) = -target, by pure bisection.

    The marginal is strictly increasing, so the clipped root is unique.
    """
    if _marginal(problem, cluster, lo) >= -target:
        return lo
    if _marginal(problem, cluster, hi) <= -target:
        return hi
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if _marginal(problem, cluster, mid) < -target:
            a = mid
        else:
            b = mid
        if b - a < 1e-14 * max(1.0, abs(a) + abs(b)):
            break
    return 0.5 * (a + b)


def _solution(problem, x, lam, method) -> OracleSolution:
    row = _coupling_row(problem)
    lo, hi = _boxes(problem)
    b = float(problem.coupling.rhs[0])
    n = problem.network.n_clusters
    objective = sum(problem.cluster_cost_value(i, np.array([x[i - 1]])) for i in range(1, n + 1))
    stat = 0.0
    for i in range(1, n + 1):
        g = _marginal(problem, i, x[i - 1]) + lam * row[i - 1]
        at_lo = x[i - 1] <= lo[i - 1] + 1e-12
        at_hi = x[i - 1] >= hi[i - 1] - 1e-12
        if at_lo and g > 0 or at_hi and g < 0:
            continue  # correct-signed multiplier at an active box face
        stat = max(stat, abs(g))
    total = float(row @ x)
    if problem.coupling.sense == "eq":
        coupling_res = abs(total - b)
    else:
        coupling_res = max(0.0, total - b) + (abs(total - b) if lam > 1e-9 else 0.0)
    y = {key: np.array([x[key[0] - 1]]) for key in problem.network.agents()}
    return OracleSolution(
        x=np.asarray(x, dtype=float),
        y=y,
        multiplier=np.array([lam]),
        objective=float(objective),
        method=method,
        stationarity_residual=stat,
        coupling_residual=coupling_res,
    )


def solve_waterfilling(problem: ProblemModel) -> OracleSolution:
    """Equal-marginal solver: bisect the coupling multiplier until the
    clipped per-cluster stationary points meet the budget."""
    row = _coupling_row(problem)
    lo, hi = _boxes(problem)
    b = float(problem.coupling.rhs[0])
    n = problem.network.n_clusters

    if float(row @ lo) > b + 1e-12:
        raise ValidationError("infeasible: box lower bounds exceed the coupling budget")
    if problem.coupling.sense == "eq" and float(row @ hi) < b - 1e-12:
        raise ValidationError("infeasible: box upper bounds cannot meet the coupling budget")

    def points(lam):
        return np.array(
            [
                _stationary_point(problem, i, lam * row[i - 1], lo[i - 1], hi[i - 1])
                for i in range(1, n + 1)
            ]
        )

    def total(lam):
        return float(row @ points(lam))

    if problem.coupling.sense == "le" and total(0.0) <= b + _BISECT_TOL:
        return _solution(problem, points(0.0), 0.0, "waterfilling")

    lam_lo = 0.0
    if problem.coupling.sense == "eq":
        step = 1.0
        while total(lam_lo) < b:  # need a smaller multiplier
            lam_lo -= step
            step *= 2.0
            if step > 1e18:
                raise NumericalError("multiplier bracket not found")
    lam_hi = max(1.0, lam_lo + 1.0)
    step = 1.0
    while total(lam_hi) > b:
        lam_hi += step
        step *= 2.0
        if step > 1e18:
            raise NumericalError("multiplier bracket not found")

    for _ in range(_BISECT_MAX):
        lam = 0.5 * (lam_lo + lam_hi)
        if total(lam) > b:
            lam_lo = lam
        else:
            lam_hi = lam
        if abs(total(lam) - b) < _BISECT_TOL and lam_hi - lam_lo < 1e-12 * max(1.0, abs(lam)):
            break
    lam = 0.5 * (lam_lo + lam_hi)
    return _solution(problem, points(lam), lam, "waterfilling")


def _inner_projected_gradient(problem, cluster, shift, lo, hi) -> float:
    """Minimize (cluster cost + shift * x) over the box by projected gradient."""
    # Curvature bound over the box, for a safe fixed step.
    curv = 0.0
    n_i = problem.network.cluster_sizes[cluster - 1]
    for j in range(1, n_i + 1):
        s = problem.agent(cluster, j).smooth
        curv += 2.0 * float(np.sum(s.a))
        if s.kind == "quadratic_plus_exp":
            for k in range(s.dim):
                peak = max(s.r[k] * lo, s.r[k] * hi)
                curv += float(s.p[k] * s.r[k] ** 2 * math.exp(min(peak, 700.0)))
    eta = 1.0 / max(curv, 1e-12)
    x = min(max(0.0, lo), hi)
    for _ in range(100_000):
        g = _marginal(problem, cluster, x) + shift
        x_new = min(max(x - eta * g, lo), hi)
        if abs(x_new - x) < 1e-15 * max(1.0, abs(x)) + 1e-16:
            return x_new
        x = x_new
    return x


def solve_projected_gradient(problem: ProblemModel) -> OracleSolution:
    """Projected-gradient route: the same multiplier bisection as the
    equal-marginal solver, but each cluster subproblem is minimized
    iteratively instead of by a stationarity root."""
    row = _coupling_row(problem)
    lo, hi = _boxes(problem)
    b = float(problem.coupling.rhs[0])
    n = problem.network.n_clusters

    if float(row @ lo) > b + 1e-12:
        raise ValidationError("infeasible: box lower bounds exceed the coupling budget")
    if problem.coupling.sense == "eq" and float(row @ hi) < b - 1e-12:
        raise ValidationError("infeasible: box upper bounds cannot meet the coupling budget")

    def points(lam):
        return np.array(
            [
                _inner_projected_gradient(problem, i, lam * row[i - 1], lo[i - 1], hi[i - 1])
                for i in range(1, n + 1)
            ]
        )

    def total(lam):
        return float(row @ points(lam))

    if problem.coupling.sense == "le" and total(0.0) <= b + _BISECT_TOL:
        return _solution(problem, points(0.0), 0.0, "projected_gradient")

    lam_lo = 0.0
    if problem.coupling.sense == "eq":
        step = 1.0
        while total(lam_lo) < b:
            lam_lo -= step
            step *= 2.0
            if step > 1e18:
                raise NumericalError("multiplier bracket not found")
    lam_hi = max(1.0, lam_lo + 1.0)
    step = 1.0
    while total(lam_hi) > b:
        lam_hi += step
        step *= 2.0
        if step > 1e18:
            raise NumericalError("multiplier bracket not found")

    for _ in range(_BISECT_MAX):
        lam = 0.5 * (lam_lo + lam_hi)
        if total(lam) > b:
            lam_lo = lam
        else:
            lam_hi = lam
        if abs(total(lam) - b) < _BISECT_TOL and lam_hi - lam_lo < 1e-12 * max(1.0, abs(lam)):
            break
    lam = 0.5 * (lam_lo + lam_hi)
    x = points(lam)
    sol = _solution(problem, x, lam, "projected_gradient")
    if sol.stationarity_residual > 1e-6 or sol.coupling_residual > 1e-6:
        raise NumericalError("projected-gradient oracle did not reach its residual target")
    return sol


def brute_force_grid(problem: ProblemModel, resolution: float = 1e-3) -> OracleSolution:
    """Exhaustive grid minimization for small instances (<= 3 clusters)."""
    n = problem.network.n_clusters
    if n > 3 or problem.m_dim != 1 or problem.coupling.n_rows != 1:
        raise ValidationError("grid oracle is limited to <= 3 clusters with one coupling row")
    row = _coupling_row(problem)
    lo, hi = _boxes(problem)
    b = float(problem.coupling.rhs[0])

    grids = [np.arange(lo[k], hi[k] + resolution, resolution) for k in range(n)]
    values = [_vector_cluster_value(problem, k + 1, grids[k]) for k in range(n)]

    best_x, best_f = None, math.inf

    def consider(x_vec, f_val):
        nonlocal best_x, best_f
        if f_val < best_f:
            best_f = f_val
            best_x = np.asarray(x_vec, dtype=float)

    if problem.coupling.sense == "le":
        x_unc = np.array([grids[k][int(np.argmin(values[k]))] for k in range(n)])
        if float(row @ x_unc) <= b + 1e-9:
            consider(x_unc, float(sum(values[k][int(np.argmin(values[k]))] for k in range(n))))

    # Budget-active surface: enumerate all but the last cluster, solve it out.
    if n == 1:
        x_last = b / row[0]
        if lo[0] - resolution <= x_last <= hi[0] + resolution:
            x_last = min(max(x_last, lo[0]), hi[0])
            consider([x_last], problem.cluster_cost_value(1, np.array([x_last])))
    elif n == 2:
        x_last = (b - row[0] * grids[0]) / row[1]
        ok = (x_last >= lo[1]) & (x_last <= hi[1])
        if np.any(ok):
            f = values[0][ok] + _vector_cluster_value(problem, 2, x_last[ok])
            k = int(np.argmin(f))
            consider([grids[0][ok][k], x_last[ok][k]], float(f[k]))
    else:
        g0, g1 = np.meshgrid(grids[0], grids[1], indexing="ij")
        x_last = (b - row[0] * g0 - row[1] * g1) / row[2]
        ok = (x_last >= lo[2]) & (x_last <= hi[2])
        if np.any(ok):
            f = (
                np.broadcast_to(values[0][:, None], g0.shape)[ok]
                + np.broadcast_to(values[1][None, :], g0.shape)[ok]
                + _vector_cluster_value(problem, 3, x_last[ok])
            )
            k = int(np.argmin(f))
            consider([g0[ok][k], g1[ok][k], x_last[ok][k]], float(f[k]))

    if best_x is None:
        raise ValidationError("grid oracle found no feasible point")
    y = {key: np.array([best_x[key[0] - 1]]) for key in problem.network.agents()}
    return OracleSolution(
        x=best_x,
        y=y,
        multiplier=np.array([math.nan]),
        objective=best_f,
        method="grid",
        stationarity_residual=math.nan,
        coupling_residual=max(0.0, float(row @ best_x) - b)
        if problem.coupling.sense == "le"
        else abs(float(row @ best_x) - b),
    )


def _vector_cluster_value(problem: ProblemModel, cluster: int, xs: np.ndarray) -> np.ndarray:
    """Vectorized cluster cost over an array of candidate decisions."""
    out = np.zeros_like(xs, dtype=float)
    n_i = problem.network.cluster_sizes[cluster - 1]
    for j in range(1, n_i + 1):
        s = problem.agent(cluster, j).smooth
        out += s.a[0] * xs * xs + s.b[0] * xs
        if s.kind == "quadratic_plus_exp":
            out += s.p[0] * np.exp(np.minimum(s.r[0] * xs, 700.0))
    return out


def reference_solution(problem: ProblemModel) -> OracleSolution:
    """Preferred centralized solution: equal-marginal route when it applies,
    otherwise the projected-gradient route."""
    try:
        return solve_waterfilling(problem)
    except ValidationError:
        return solve_projected_gradient(problem)
