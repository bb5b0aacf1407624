"""Iteration-synchronous execution of the delayed dual proximal-gradient loop.

Each global step t computes, for every agent, a proximal/projected gradient
update of its dual block from its own current state and the lagged stamp
(t - d)^+ of the neighbor-coupled quantities, then advances the edge
multipliers with the freshly produced consensual states.  Two interchangeable
steppers implement the update: a per-agent stepper that mirrors the
neighbor-sum form of the updates, and a stacked stepper that applies the
equivalent block-matrix form; they agree to near machine precision and the
stacked one is the default for speed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import NumericalError, ValidationError
from .costs import ProblemModel, conjugate_argmin, prox_conjugate_nonsmooth
from .delays import ChannelMonitor, LinkArrivals, d_from_q, stamp_for_read
from .diagnostics import dual_objective
from .operators import SystemOperators, assemble, certify_step_sizes

_DIVERGENCE_LIMIT = 1e9


@dataclass
class AgentState:
    """One agent's dual block and owned edge multipliers (a read-only view)."""

    key: tuple[int, int]
    mu: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    xi: dict[int, np.ndarray]
    zeta: dict[int, np.ndarray]
    step: float
    weight: float


def agent_state(ops: SystemOperators, alpha: np.ndarray, omega: np.ndarray, key) -> AgentState:
    """Extract an agent's view of the stacked state."""
    lay = ops.layout
    i, j = key
    return AgentState(
        key=key,
        mu=alpha[lay.mu_slices[key]].copy(),
        gamma=alpha[lay.gamma_slices[key]].copy(),
        theta=alpha[lay.theta_slices[key]].copy(),
        xi={l: omega[lay.xi_slices[(i, j, l)]].copy() for l in lay.sets.omega[key]},
        zeta={n: omega[lay.zeta_slices[(i, j, n)]].copy() for n in lay.sets.omega_hat[key]},
        step=float(ops.step[lay.alpha_offsets[lay.index[key]]]),
        weight=ops.pi[key],
    )


class ErgodicAccumulator:
    """Running mean of post-update iterates with compensated summation."""

    def __init__(self, dim: int):
        self._sum = np.zeros(dim)
        self._carry = np.zeros(dim)
        self._y = np.empty(dim)
        self._t = np.empty(dim)
        self.count = 0

    def add(self, value: np.ndarray) -> None:
        np.subtract(value, self._carry, out=self._y)
        np.add(self._sum, self._y, out=self._t)
        np.subtract(self._t, self._sum, out=self._carry)
        self._carry -= self._y
        self._sum, self._t = self._t, self._sum
        self.count += 1

    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise NumericalError("ergodic average of an empty run")
        return self._sum / self.count


@dataclass
class PrimalEstimate:
    """Recovered primal solution: per-agent estimates and cluster means."""

    y: dict[tuple[int, int], np.ndarray]
    x: np.ndarray  # stacked cluster decisions, n_clusters * m_dim


def gradient_oracle(ops: SystemOperators, problem: ProblemModel, key, alpha_block):
    """Per-agent gradient blocks of the smooth dual cost.

    Returns (m_mu, m_gamma, m_theta); their concatenation is the gradient of
    f*(W a) + D a at the agent's block.
    """
    ag = ops.agent_ops[key]
    y = conjugate_argmin(problem.agent(*key).smooth, ag.conjugate_input @ alpha_block)
    m_mu = -y
    m_gamma = -ag.laplacian_col @ y
    m_theta = -ag.coupling_block @ y + ag.b_share
    return m_mu, m_gamma, m_theta


def update_alpha(
    ops: SystemOperators,
    problem: ProblemModel,
    key,
    alpha_now: np.ndarray,
    alpha_lag: np.ndarray,
    omega_lag: np.ndarray,
) -> np.ndarray:
    """One agent's dual-block update from its own state and lagged reads.

    ``alpha_now`` supplies the agent's current block; all neighbor-coupled
    terms (neighbor consensual states, own and neighbor edge multipliers, and
    the agent's own consensual state inside the disagreement terms) are read
    from the lagged snapshots.
    """
    lay = ops.layout
    net = lay.network
    i, j = key
    ag = ops.agent_ops[key]
    c = ops.c[key]
    pi = ops.pi
    agent = problem.agent(i, j)

    m_mu, m_gamma, m_theta = gradient_oracle(ops, problem, key, lay.block(alpha_now, key))

    mu_new = prox_conjugate_nonsmooth(
        agent.nonsmooth, alpha_now[lay.mu_slices[key]] - c * m_mu, c
    )

    gamma_own_lag = alpha_lag[lay.gamma_slices[key]]
    drift = m_gamma.copy()
    for l in lay.sets.omega[key]:
        drift += omega_lag[lay.xi_slices[(i, j, l)]]
        drift += pi[key] * (gamma_own_lag - alpha_lag[lay.gamma_slices[(i, l)]])
    for lp in lay.sets.omega_sharp[key]:
        drift -= omega_lag[lay.xi_slices[(i, lp, j)]]
        drift += pi[(i, lp)] * (gamma_own_lag - alpha_lag[lay.gamma_slices[(i, lp)]])
    lo, hi = problem.boxes.cluster_bounds(i)
    gamma_new = np.clip(alpha_now[lay.gamma_slices[key]] - c * drift, lo, hi)

    n_ij = net.relabel(i, j)
    theta_own_lag = alpha_lag[lay.theta_slices[key]]
    drift = m_theta.copy()
    for nuv in lay.sets.omega_hat[key]:
        neighbor = net.unlabel(nuv)
        drift += omega_lag[lay.zeta_slices[(i, j, nuv)]]
        drift += pi[key] * (theta_own_lag - alpha_lag[lay.theta_slices[neighbor]])
    for nsharp in lay.sets.omega_hat_sharp[key]:
        owner = net.unlabel(nsharp)
        drift -= omega_lag[lay.zeta_slices[(owner[0], owner[1], n_ij)]]
        drift += pi[owner] * (theta_own_lag - alpha_lag[lay.theta_slices[owner]])
    lo, hi = problem.boxes.coupling_bounds()
    theta_new = np.clip(alpha_now[lay.theta_slices[key]] - c * drift, lo, hi)

    return np.concatenate([mu_new, gamma_new, theta_new])


def update_omega(
    ops: SystemOperators,
    key,
    alpha_next: np.ndarray,
    omega_lag: np.ndarray,
) -> tuple[dict, dict]:
    """One agent's edge-multiplier ascent from fresh consensual states.

    Returns the agent's new cluster-edge and global-edge multipliers as two
    dicts keyed like the layout slices; stacking all agents reproduces
    ``omega_lag + S Z alpha_next``.
    """
    lay = ops.layout
    i, j = key
    pi_own = ops.pi[key]
    xi_out = {}
    gamma_own = alpha_next[lay.gamma_slices[key]]
    for l in lay.sets.omega[key]:
        xi_out[(i, j, l)] = omega_lag[lay.xi_slices[(i, j, l)]] + pi_own * (
            gamma_own - alpha_next[lay.gamma_slices[(i, l)]]
        )
    zeta_out = {}
    theta_own = alpha_next[lay.theta_slices[key]]
    for nuv in lay.sets.omega_hat[key]:
        neighbor = lay.network.unlabel(nuv)
        zeta_out[(i, j, nuv)] = omega_lag[lay.zeta_slices[(i, j, nuv)]] + pi_own * (
            theta_own - alpha_next[lay.theta_slices[neighbor]]
        )
    return xi_out, zeta_out


class PerAgentStepper:
    """Executes one global step by looping the per-agent update functions."""

    def __init__(self, ops: SystemOperators, problem: ProblemModel):
        self.ops = ops
        self.problem = problem

    def step(self, alpha_now, alpha_lag, omega_lag):
        ops, lay = self.ops, self.ops.layout
        alpha_next = np.empty_like(alpha_now)
        for key in lay.agents:
            block = update_alpha(ops, self.problem, key, alpha_now, alpha_lag, omega_lag)
            k = lay.index[key]
            off = lay.alpha_offsets[k]
            alpha_next[off : off + lay.block_sizes[k]] = block
        omega_next = np.empty_like(omega_lag)
        for key in lay.agents:
            xi_out, zeta_out = update_omega(ops, key, alpha_next, omega_lag)
            for edge_key, value in xi_out.items():
                omega_next[lay.xi_slices[edge_key]] = value
            for edge_key, value in zeta_out.items():
                omega_next[lay.zeta_slices[edge_key]] = value
        return alpha_next, omega_next


class StackedStepper:
    """Vectorized equivalent of the per-agent step.

    Applies ``alpha+ = prox_C[alpha - C (grad + Z^T w_lag + Z^T S Z a_lag)]``
    followed by ``omega+ = w_lag + S Z alpha+`` using precomputed stacked
    coefficient arrays; the proximal step splits into a Moreau-decomposed box
    prox on the private blocks and box projections on the consensual blocks.
    """

    def __init__(self, ops: SystemOperators, problem: ProblemModel):
        self.ops = ops
        self.problem = problem
        lay = ops.layout
        m = lay.m_dim

        rows = []
        for key in lay.agents:
            w = ops.agent_ops[key].conjugate_input
            pad = np.zeros((m, lay.alpha_size))
            k = lay.index[key]
            off = lay.alpha_offsets[k]
            pad[:, off : off + lay.block_sizes[k]] = w
            rows.append(pad)
        self.W_full = np.vstack(rows)
        self.affine = np.zeros(lay.alpha_size)
        for key in lay.agents:
            k = lay.index[key]
            off = lay.alpha_offsets[k]
            self.affine[off : off + lay.block_sizes[k]] += ops.agent_ops[key].affine_row

        smooths = [problem.agent(*key).smooth for key in lay.agents]
        self.a_all = np.concatenate([s.a for s in smooths])
        self.b_all = np.concatenate([s.b for s in smooths])
        self.inv_2a = 1.0 / (2.0 * self.a_all)
        self.exp_terms = []
        for k0, s in enumerate(smooths):
            if s.kind == "quadratic_plus_exp":
                for kk in range(s.dim):
                    if s.p[kk] * s.r[kk] != 0.0:
                        self.exp_terms.append(
                            (k0 * m + kk, s.a[kk], s.b[kk], s.p[kk], s.r[kk])
                        )
        self._warm = [0.0] * len(self.exp_terms)

        self.mu_idx = np.concatenate(
            [np.arange(lay.mu_slices[key].start, lay.mu_slices[key].stop) for key in lay.agents]
        )
        mu_lo, mu_hi, zero_mask = [], [], []
        for key in lay.agents:
            g = problem.agent(*key).nonsmooth
            if g.kind == "box_indicator":
                mu_lo.append(g.lower)
                mu_hi.append(g.upper)
                zero_mask.append(np.zeros(m, dtype=bool))
            else:
                mu_lo.append(np.full(m, -np.inf))
                mu_hi.append(np.full(m, np.inf))
                zero_mask.append(np.ones(m, dtype=bool))
        self.mu_lo = np.concatenate(mu_lo)
        self.mu_hi = np.concatenate(mu_hi)
        self.mu_zero = np.concatenate(zero_mask)

        self.clip_lo = np.full(lay.alpha_size, -np.inf)
        self.clip_hi = np.full(lay.alpha_size, np.inf)
        for key in lay.agents:
            lo, hi = problem.boxes.cluster_bounds(key[0])
            self.clip_lo[lay.gamma_slices[key]] = lo
            self.clip_hi[lay.gamma_slices[key]] = hi
            lo, hi = problem.boxes.coupling_bounds()
            self.clip_lo[lay.theta_slices[key]] = lo
            self.clip_hi[lay.theta_slices[key]] = hi

        self.Z = ops.consensus
        self.Zt = ops.consensus.T.copy()
        self.WT = self.W_full.T.copy()
        self.S = ops.edge_weights
        self._wbuf = np.empty(self.W_full.shape[0])
        self._pull = np.empty(lay.alpha_size)
        self._scratch = np.empty(lay.alpha_size)
        self._zbuf = np.empty(self.Z.shape[0])
        self._last_w = [math.nan] * len(self.exp_terms)

    def conjugate_points(self, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked conjugate inputs and minimizers for every agent."""
        from .costs import _NEWTON_TOL, _exp_stationary_root

        w = np.dot(self.W_full, alpha, out=self._wbuf)
        y = (w - self.b_all) * self.inv_2a
        for n, (idx, a, b, p, r) in enumerate(self.exp_terms):
            # Warm-started Newton; the safeguarded solver is the fallback.
            wk = float(w[idx])
            yk = self._warm[n]
            if wk == self._last_w[n]:
                y[idx] = yk
                continue
            tol = _NEWTON_TOL * max(1.0, 1e-3 * abs(wk))
            ok = False
            for _ in range(12):
                e = p * r * math.exp(min(r * yk, 700.0))
                res = 2.0 * a * yk + b + e - wk
                if abs(res) < tol:
                    # trailing polish step, mirroring the safeguarded solver
                    yk -= res / (2.0 * a + r * e)
                    ok = True
                    break
                step = res / (2.0 * a + r * e)
                yk -= step
                if abs(step) < 1e-15 * (1.0 + abs(yk)):
                    ok = abs(res) < 1e-6
                    break
            if not ok:
                yk = _exp_stationary_root(a, b, p, r, wk)
            self._warm[n] = yk
            self._last_w[n] = wk
            y[idx] = yk
        return w, y

    def smooth_objective(self, alpha: np.ndarray) -> float:
        """Sum of the agents' smooth dual costs (conjugates plus affine term)."""
        # A diverging state overflows here before the divergence detector
        # trips; the non-finite value is reported as-is in the logs.
        with np.errstate(over="ignore", invalid="ignore"):
            w, y = self.conjugate_points(alpha)
            fvals = self.a_all * y * y + self.b_all * y
            for idx, a, b, p, r in self.exp_terms:
                fvals[idx] += p * math.exp(min(r * y[idx], 700.0))
            return float(np.dot(w, y) - np.sum(fvals) + np.dot(self.affine, alpha))

    def step(self, alpha_now, alpha_lag, omega_lag):
        _, y = self.conjugate_points(alpha_now)
        pull = np.dot(self.WT, y, out=self._pull)
        pull += self.affine
        pull += np.dot(self.ops.ZtSZ, alpha_lag, out=self._scratch)
        if omega_lag.size:
            pull += self.Zt @ omega_lag
        np.multiply(self.ops.step, pull, out=pull)
        v = np.subtract(alpha_now, pull, out=pull)
        alpha_next = np.clip(v, self.clip_lo, self.clip_hi)
        s = v[self.mu_idx]
        c = self.ops.step[self.mu_idx]
        mu = s - c * np.clip(s / c, self.mu_lo, self.mu_hi)
        mu[self.mu_zero] = 0.0
        alpha_next[self.mu_idx] = mu
        z = np.dot(self.Z, alpha_next, out=self._zbuf)
        z *= self.S
        omega_next = omega_lag + z
        return alpha_next, omega_next


def recover_primal(ops: SystemOperators, problem: ProblemModel, alpha: np.ndarray) -> PrimalEstimate:
    """Primal estimates from a dual state: per-agent conjugate minimizers and
    their cluster means."""
    lay = ops.layout
    y = {}
    for key in lay.agents:
        ag = ops.agent_ops[key]
        y[key] = conjugate_argmin(
            problem.agent(*key).smooth, ag.conjugate_input @ lay.block(alpha, key)
        )
    m = lay.m_dim
    x = np.zeros(lay.network.n_clusters * m)
    for i, size in enumerate(lay.network.cluster_sizes, start=1):
        x[(i - 1) * m : i * m] = np.mean([y[(i, j)] for j in range(1, size + 1)], axis=0)
    return PrimalEstimate(y=y, x=x)


@dataclass
class RunReport:
    """Everything a run produced: trajectories, recovered primal, checks."""

    name: str
    q: int
    d: int
    engine: str
    iterations: int
    converged: bool
    alpha: np.ndarray
    omega: np.ndarray
    alpha_ergodic: np.ndarray
    x_last: np.ndarray
    x_ergodic: np.ndarray
    primal_last: PrimalEstimate
    primal_ergodic: PrimalEstimate
    trajectory: dict
    h_star: float
    certificate: dict
    channel: dict
    oracle: object = None
    runtime_s: float = 0.0
    ops: SystemOperators = field(default=None, repr=False)
    problem: ProblemModel = field(default=None, repr=False)
    alpha_history: np.ndarray = field(default=None, repr=False)
    omega_history: np.ndarray = field(default=None, repr=False)

    @property
    def H_last(self) -> float:
        return float(self.trajectory["H"][-1])


class _Ring:
    """Fixed-depth stamp-indexed history of stacked state vectors."""

    def __init__(self, depth: int, dim: int):
        self.depth = depth
        self.data = np.zeros((depth, dim))

    def get(self, stamp: int) -> np.ndarray:
        return self.data[stamp % self.depth]

    def put(self, stamp: int, value: np.ndarray) -> None:
        self.data[stamp % self.depth] = value


def _directed_links(network) -> list:
    links = set()
    for i, edges in enumerate(network.intra_edges, start=1):
        for j, l in edges:
            a, b = network.relabel(i, j), network.relabel(i, l)
            links.add((a, b))
            links.add((b, a))
    for u, v in network.global_edges:
        links.add((u, v))
        links.add((v, u))
    return sorted(links)


def run(
    scenario,
    *,
    seed=None,
    max_iters=None,
    qmax=None,
    delay_mode=None,
    log_stride=None,
    engine="stacked",
    read_mode="lagged",
    record_state=False,
    allow_uncertified=False,
    h_star=None,
    compute_oracle=True,
) -> RunReport:
    """Execute a scenario and return its report.

    Overrides replace the scenario's delay/solver settings.  Step sizes are
    certified before running; a failing certificate refuses the run unless
    ``allow_uncertified`` is set.  ``record_state`` keeps the full per-stamp
    state history for trajectory diagnostics.
    """
    from .delays import DelaySchedule

    network = scenario.network
    problem = scenario.problem
    cfg = scenario.solver_cfg
    delay_cfg = dict(scenario.delay_cfg)
    if seed is not None:
        delay_cfg["seed"] = int(seed)
    if qmax is not None:
        delay_cfg["q"] = int(qmax)
    if delay_mode is not None:
        delay_cfg["mode"] = delay_mode
    q = int(delay_cfg.get("q", 0))
    d = d_from_q(q)

    ops = assemble(network, problem, d, pi=cfg.get("pi", 1.0))
    c_spec = cfg.get("c", "auto")
    certificate = certify_step_sizes(ops, None if c_spec == "auto" else c_spec)
    if not (certificate["descent_ok"] and certificate["consensus_ok"]):
        if not allow_uncertified:
            raise ValidationError(
                "step sizes fail the eigenvalue certificate; "
                "pass allow_uncertified=True to run anyway"
            )

    schedule = DelaySchedule(
        q,
        mode=delay_cfg.get("mode", "uniform"),
        seed=delay_cfg.get("seed", 0),
        value=delay_cfg.get("value"),
        table=delay_cfg.get("table"),
    )
    links = _directed_links(network)
    monitor = ChannelMonitor(links, schedule, d)

    total = int(max_iters if max_iters is not None else cfg.get("max_iters", 20000))
    tol = float(cfg.get("tol", 1e-9))
    patience = int(cfg.get("patience", 50))
    stride = int(log_stride if log_stride is not None else cfg.get("log_stride", 1))
    if stride < 1:
        raise ValidationError("log stride must be >= 1")

    lay = ops.layout
    alpha0 = cfg.get("alpha0")
    omega0 = cfg.get("omega0")
    alpha = np.zeros(lay.alpha_size) if alpha0 is None else np.asarray(alpha0, dtype=float).copy()
    omega = np.zeros(lay.omega_size) if omega0 is None else np.asarray(omega0, dtype=float).copy()
    if alpha.shape != (lay.alpha_size,) or omega.shape != (lay.omega_size,):
        raise ValidationError("initial state dimensions do not match the scenario")

    if engine == "stacked":
        stepper = StackedStepper(ops, problem)
    elif engine == "per_agent":
        stepper = PerAgentStepper(ops, problem)
    else:
        raise ValidationError(f"unknown engine {engine!r}")
    if read_mode not in ("lagged", "freshest"):
        raise ValidationError(f"unknown read mode {read_mode!r}")
    arrivals = None
    if read_mode == "freshest":
        if engine != "per_agent":
            stepper = PerAgentStepper(ops, problem)
            engine = "per_agent"
        arrivals = LinkArrivals(links, schedule, total + d + 2)

    if h_star is None and compute_oracle:
        from .oracles import reference_solution

        try:
            oracle = reference_solution(problem)
            h_star = -oracle.objective
        except Exception:
            oracle = None
    else:
        oracle = None

    fast_h = StackedStepper(ops, problem) if engine != "stacked" else stepper

    def full_objective(a):
        value = fast_h.smooth_objective(a)
        tol_box = 1e-9
        if np.any(a < fast_h.clip_lo - tol_box) or np.any(a > fast_h.clip_hi + tol_box):
            return math.inf
        mu = a[fast_h.mu_idx]
        if np.any(np.abs(mu[fast_h.mu_zero]) > tol_box):
            return math.inf
        box = ~fast_h.mu_zero
        value += float(
            np.sum(np.maximum(fast_h.mu_lo[box] * mu[box], fast_h.mu_hi[box] * mu[box]))
        )
        return value

    def eps_of(h_val):
        if h_star is None or not math.isfinite(h_val):
            return math.nan
        gap = abs(h_val - h_star)
        return gap / abs(h_star) if abs(h_star) > 1e-12 else gap

    alpha_ring = _Ring(d + 2, lay.alpha_size)
    omega_ring = _Ring(d + 2, lay.omega_size)
    alpha_ring.put(0, alpha)
    omega_ring.put(0, omega)
    alpha_hist = [alpha.copy()] if record_state else None
    omega_hist = [omega.copy()] if record_state else None

    ergodic = ErgodicAccumulator(lay.alpha_size)
    log = {"t": [], "H": [], "H_erg": [], "Znorm": [], "Znorm_erg": [], "eps": [], "stamp": []}

    def log_row(t, alpha_t, alpha_bar):
        h_now = full_objective(alpha_t)
        h_erg = full_objective(alpha_bar)
        log["t"].append(t)
        log["H"].append(h_now)
        log["H_erg"].append(h_erg)
        log["Znorm"].append(ops.consensus_violation(alpha_t))
        log["Znorm_erg"].append(ops.consensus_violation(alpha_bar))
        log["eps"].append(eps_of(h_now))
        log["stamp"].append(stamp_for_read(t, d))

    log_row(0, alpha, alpha)

    started = time.perf_counter()
    streak = 0
    converged = False
    steps_done = 0
    checked_through = 0
    delta_buf = np.empty(lay.alpha_size)
    # Overflow inside a step only happens on a diverging trajectory, which
    # the delta/norm detector below turns into a NumericalError.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(total):
            if t >= checked_through:
                upto = min(total, t + 1024)
                if not monitor.check_steps(checked_through, upto):
                    raise NumericalError(f"lagged stamp unavailable near step {t}")
                checked_through = upto
            lag = stamp_for_read(t, d)
            alpha_now = alpha_ring.get(t)
            alpha_lag = alpha_ring.get(lag)
            omega_lag = omega_ring.get(lag)

            if read_mode == "freshest":
                alpha_next, omega_next = _freshest_step(
                    ops, problem, arrivals, alpha_ring, omega_ring, t, d
                )
            else:
                alpha_next, omega_next = stepper.step(alpha_now, alpha_lag, omega_lag)

            np.subtract(alpha_next, alpha_now, out=delta_buf)
            np.abs(delta_buf, out=delta_buf)
            delta = float(delta_buf.max()) if delta_buf.size else 0.0
            if not math.isfinite(delta) or (
                t % 256 == 0
                and float(np.abs(alpha_next).max(initial=0.0)) > _DIVERGENCE_LIMIT
            ):
                raise NumericalError(f"divergence detected at step {t}")

            alpha_ring.put(t + 1, alpha_next)
            omega_ring.put(t + 1, omega_next)
            if record_state:
                alpha_hist.append(alpha_next.copy())
                omega_hist.append(omega_next.copy())
            ergodic.add(alpha_next)
            steps_done = t + 1

            streak = streak + 1 if delta < tol else 0
            converged = streak >= patience
            if (t + 1) % stride == 0 or converged or t + 1 == total:
                log_row(t + 1, alpha_next, ergodic.mean())
            if converged:
                break

    alpha_final = alpha_ring.get(steps_done)
    omega_final = omega_ring.get(steps_done)
    alpha_bar = ergodic.mean() if ergodic.count else alpha_final
    primal_last = recover_primal(ops, problem, alpha_final)
    primal_erg = recover_primal(ops, problem, alpha_bar)

    return RunReport(
        name=scenario.name,
        q=q,
        d=d,
        engine=engine,
        iterations=steps_done,
        converged=converged,
        alpha=alpha_final.copy(),
        omega=omega_final.copy(),
        alpha_ergodic=alpha_bar,
        x_last=primal_last.x,
        x_ergodic=primal_erg.x,
        primal_last=primal_last,
        primal_ergodic=primal_erg,
        trajectory={k: np.asarray(v) for k, v in log.items()},
        h_star=h_star,
        certificate=certificate,
        channel=monitor.report(),
        oracle=oracle,
        runtime_s=time.perf_counter() - started,
        ops=ops,
        problem=problem,
        alpha_history=np.asarray(alpha_hist) if record_state else None,
        omega_history=np.asarray(omega_hist) if record_state else None,
    )


def _freshest_step(ops, problem, arrivals, alpha_ring, omega_ring, t, d):
    """Exploratory mode: neighbor data is read at the freshest arrived stamp
    instead of exactly (t - d)^+.  Own data is read at the current step."""
    lay = ops.layout
    net = lay.network
    alpha_now = alpha_ring.get(t)
    alpha_next = np.empty_like(alpha_now)
    omega_lag_exact = omega_ring.get(stamp_for_read(t, d))

    for key in lay.agents:
        i, j = key
        me = net.relabel(i, j)
        alpha_read = alpha_now.copy()
        omega_read = omega_lag_exact.copy()
        for l in lay.sets.omega[key] + lay.sets.omega_sharp[key]:
            s = max(0, min(arrivals.freshest_stamp(net.relabel(i, l), me, t), t))
            alpha_read[lay.gamma_slices[(i, l)]] = alpha_ring.get(s)[lay.gamma_slices[(i, l)]]
            if l < j:
                omega_read[lay.xi_slices[(i, l, j)]] = omega_ring.get(s)[lay.xi_slices[(i, l, j)]]
        for nuv in lay.sets.omega_hat[key] + lay.sets.omega_hat_sharp[key]:
            owner = net.unlabel(nuv)
            s = max(0, min(arrivals.freshest_stamp(nuv, me, t), t))
            alpha_read[lay.theta_slices[owner]] = alpha_ring.get(s)[lay.theta_slices[owner]]
            if nuv < me:
                sl = lay.zeta_slices[(owner[0], owner[1], me)]
                omega_read[sl] = omega_ring.get(s)[sl]
        block = update_alpha(ops, problem, key, alpha_now, alpha_read, omega_read)
        k = lay.index[key]
        off = lay.alpha_offsets[k]
        alpha_next[off : off + lay.block_sizes[k]] = block

    omega_lag = omega_ring.get(stamp_for_read(t, d))
    omega_next = omega_lag + ops.edge_weights * (ops.consensus @ alpha_next)
    return alpha_next, omega_next
