"""Dual objective, consensus residuals, and trajectory certificates.

These are post-processing checks over recorded trajectories: the two
summed-inequality certificates that bound the effect of stale reads, the
ergodic bound with its constant, and empirical O(1/T) rate fits.
"""

from __future__ import annotations

import math

import numpy as np

from . import ValidationError
from .costs import ProblemModel, conjugate_value
from .operators import SystemOperators


def dual_objective(ops: SystemOperators, problem: ProblemModel, alpha, tol: float = 1e-9) -> float:
    """Value of the dual cost at a stacked state.

    Sums each agent's smooth conjugate term, affine term, and non-smooth
    conjugate (box support) term; returns ``inf`` when a consensual block
    leaves its confining box (the indicator terms).
    """
    lay = ops.layout
    alpha = np.asarray(alpha, dtype=float)
    total = 0.0
    for key in lay.agents:
        ag = ops.agent_ops[key]
        block = lay.block(alpha, key)
        total += conjugate_value(problem.agent(*key).smooth, ag.conjugate_input @ block)
        total += float(ag.affine_row @ block)
        r = problem.agent(*key).nonsmooth.support(alpha[lay.mu_slices[key]], tol=tol)
        if math.isinf(r):
            return math.inf
        total += r
        lo, hi = problem.boxes.cluster_bounds(key[0])
        g = alpha[lay.gamma_slices[key]]
        if np.any(g < lo - tol) or np.any(g > hi + tol):
            return math.inf
        lo, hi = problem.boxes.coupling_bounds()
        th = alpha[lay.theta_slices[key]]
        if np.any(th < lo - tol) or np.any(th > hi + tol):
            return math.inf
    return total


def consensus_violation(ops: SystemOperators, alpha) -> float:
    """Euclidean norm of the stacked consensus residuals."""
    return float(np.linalg.norm(ops.consensus @ np.asarray(alpha, dtype=float)))


def _weighted_sq(ops: SystemOperators, vec: np.ndarray, weights: np.ndarray) -> float:
    z = ops.consensus @ vec
    return float(np.dot(weights * z, z))


def check_lemma2(
    ops: SystemOperators,
    alpha_history: np.ndarray,
    omega_history: np.ndarray,
    T: int,
) -> dict:
    """Evaluate the two stale-read trajectory inequalities up to step ``T``.

    The first compares the lagged-step energy in the S-weighted consensus
    metric against the fresh-step energy in the (1+d)^2-inflated metric; the
    second telescopes the edge-multiplier drift against its starting energy
    (stated here at the zero reference point).  Returns the signed slacks
    (non-negative means the inequality holds).
    """
    d = ops.d
    if T < 2 * d + 1:
        raise ValidationError(f"trajectory check needs T >= {2 * d + 1}, got {T}")
    if alpha_history.shape[0] < T + 2:
        raise ValidationError("trajectory too short for the requested T")

    s_diag = ops.edge_weights
    b_diag = ops.relaxed_edge_weights
    lhs_stale = 0.0
    rhs_fresh = 0.0
    for t in range(T + 1):
        lag = max(0, t - d)
        lhs_stale += _weighted_sq(ops, alpha_history[t + 1] - alpha_history[lag], s_diag)
        rhs_fresh += _weighted_sq(ops, alpha_history[t + 1] - alpha_history[t], b_diag)

    inv_s = 1.0 / s_diag if s_diag.size else s_diag
    q_diag = (1.0 + d) * inv_s
    lhs_drift = 0.0
    for t in range(T + 1):
        lag = max(0, t - d)
        w_lag = omega_history[lag]
        w_next = omega_history[t + 1]
        lhs_drift += float(np.dot(inv_s * w_lag, w_lag) - np.dot(inv_s * w_next, w_next))
    w0 = omega_history[0]
    rhs_drift = float(np.dot(q_diag * w0, w0))

    return {
        "T": T,
        "stale_lhs": lhs_stale,
        "stale_rhs": rhs_fresh,
        "stale_slack": rhs_fresh - lhs_stale,
        "drift_lhs": lhs_drift,
        "drift_rhs": rhs_drift,
        "drift_slack": rhs_drift - lhs_drift,
    }


def check_theorem1(
    ops: SystemOperators,
    problem: ProblemModel,
    alpha_history: np.ndarray,
    omega_history: np.ndarray,
    alpha_star: np.ndarray,
    omega_star: np.ndarray,
    h_star: float,
    rel_tol: float = 0.05,
) -> dict:
    """Evaluate the ergodic bound along a recorded trajectory.

    The saddle point is only known approximately (from an oracle or a long
    reference run), so the bound is reported with a relative tolerance on its
    constant rather than asserted exactly.
    """
    d = ops.d
    n_steps = alpha_history.shape[0] - 1
    inv_s = 1.0 / ops.edge_weights if ops.edge_weights.size else ops.edge_weights
    q_diag = (1.0 + d) * inv_s
    w0 = omega_history[0]
    a0 = alpha_history[0]
    xi_const = (
        4.0 * float(np.dot(q_diag * omega_star, omega_star))
        + float(np.dot(q_diag * w0, w0))
        + 0.5 * float(np.dot((alpha_star - a0) ** 2, 1.0 / ops.step))
        + 0.5 * ops.gamma_drift
    )
    omega_star_norm = float(np.linalg.norm(omega_star))

    running = np.zeros_like(a0)
    rows = []
    holds = True
    for t in range(n_steps):
        running += alpha_history[t + 1]
        T = t
        if T < 2 * d + 1:
            continue
        bar = running / (T + 1)
        lhs = (T + 1) * (
            dual_objective(ops, problem, bar)
            - h_star
            + 2.0 * omega_star_norm * consensus_violation(ops, bar)
        )
        rows.append((T, lhs))
        if lhs > xi_const * (1.0 + rel_tol):
            holds = False
    return {"xi": xi_const, "lhs": rows, "holds": holds, "rel_tol": rel_tol}


def fit_rate(ts, gaps) -> float | None:
    """Log-log slope of a gap sequence over its final decade.

    Returns None when the trajectory is degenerate (fewer than three positive
    finite points in the final decade, or no spread in t).
    """
    ts = np.asarray(ts, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = (ts > 0) & np.isfinite(gaps) & (gaps > 0)
    ts, gaps = ts[keep], gaps[keep]
    if ts.size < 3:
        return None
    lo = ts[-1] / 10.0
    sel = ts >= lo
    if np.count_nonzero(sel) < 3 or ts[sel][0] == ts[sel][-1]:
        return None
    slope = np.polyfit(np.log(ts[sel]), np.log(gaps[sel]), 1)[0]
    return float(slope)


def gap_ratio(ts, values, t_early: int, t_late: int) -> float:
    """values(t_late) / values(t_early) at the nearest logged steps.

    Zero-by-zero ratios (already-converged residuals) count as 0.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    early = values[int(np.argmin(np.abs(ts - t_early)))]
    late = values[int(np.argmin(np.abs(ts - t_late)))]
    if early == 0.0:
        return 0.0 if late == 0.0 else math.inf
    return float(late / early)


def monotone_envelope_decreasing(values, drop: float = 1e-6) -> bool:
    """True when the running-minimum envelope of a series strictly decreases
    (the final envelope value sits below the starting value by at least the
    relative ``drop``).  A series starting at zero is trivially decreasing."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size < 2 or values[0] == 0.0:
        return True
    env = np.minimum.accumulate(values)
    return env[-1] <= env[0] * (1.0 - drop)
