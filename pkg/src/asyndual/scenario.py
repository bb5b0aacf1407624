"""Scenario files: JSON ingestion, validation, and the bundled examples.

A scenario bundles the network description, per-agent costs, the coupling
constraint, dual confinement boxes, the delay model, and solver settings.
Cluster costs are given either as an explicit agent list or as an economic
dispatch block (fuel cost plus two emission curves) that is expanded at load
time, including the emission penalty price computed from the upper
generation limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import ValidationError
from .costs import (
    AgentProblem,
    DualBoxes,
    NonsmoothCost,
    ProblemModel,
    SmoothCost,
    make_coupling,
)
from .topology import ClusterNetwork


@dataclass
class Scenario:
    """Validated scenario, ready to run."""

    name: str
    network: ClusterNetwork
    problem: ProblemModel
    delay_cfg: dict
    solver_cfg: dict
    raw: dict = field(repr=False, default=None)


def _require(mapping, key, context):
    if key not in mapping:
        raise ValidationError(f"missing key {context}.{key}")
    return mapping[key]


def _as_floats(value, context):
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ValidationError(f"{context} must be numeric") from None
    return arr


def _smooth_from_spec(spec, sign, m_dim, context) -> SmoothCost:
    kind = _require(spec, "kind", context)
    a = sign * _as_floats(_require(spec, "a", context), f"{context}.a")
    b = sign * _as_floats(_require(spec, "b", context), f"{context}.b")
    if a.shape[0] != m_dim:
        raise ValidationError(f"{context}.a must have length {m_dim}")
    if kind == "quadratic":
        return SmoothCost(kind="quadratic", a=a, b=b)
    if kind == "quadratic_plus_exp":
        p = sign * _as_floats(_require(spec, "p", context), f"{context}.p")
        r = _as_floats(_require(spec, "r", context), f"{context}.r")
        return SmoothCost(kind="quadratic_plus_exp", a=a, b=b, p=p, r=r)
    raise ValidationError(f"{context}.kind has unknown value {kind!r}")


def _nonsmooth_from_spec(spec, m_dim, context) -> NonsmoothCost:
    kind = _require(spec, "kind", context)
    if kind in ("box", "box_indicator"):
        lo = _as_floats(_require(spec, "lower", context), f"{context}.lower")
        hi = _as_floats(_require(spec, "upper", context), f"{context}.upper")
        if lo.shape[0] == 1 and m_dim > 1:
            lo = np.full(m_dim, lo[0])
            hi = np.full(m_dim, hi[0])
        return NonsmoothCost(kind="box_indicator", lower=lo, upper=hi)
    if kind == "zero":
        return NonsmoothCost(kind="zero")
    raise ValidationError(f"{context}.kind has unknown value {kind!r}")


def _dispatch_agents(spec, m_dim, context) -> list[AgentProblem]:
    """Expand an economic-dispatch cluster into its three agents.

    The cluster cost is chi * fuel + (1 - chi) * price * (sulfur + nitrogen)
    with the emission price set to fuel(x_max) / (sulfur(x_max) +
    nitrogen(x_max)).  A small quadratic shift moves curvature from the fuel
    agent to the exponential-emission agent so every agent is strongly
    convex while the cluster total is unchanged.
    """
    if m_dim != 1:
        raise ValidationError(f"{context}: dispatch clusters require m_dim == 1")
    fuel = _as_floats(_require(spec, "fuel", context), f"{context}.fuel")
    sulfur = _as_floats(_require(spec, "sulfur", context), f"{context}.sulfur")
    nitrogen = _as_floats(_require(spec, "nitrogen", context), f"{context}.nitrogen")
    if fuel.shape[0] != 3 or sulfur.shape[0] != 3 or nitrogen.shape[0] != 4:
        raise ValidationError(f"{context}: fuel/sulfur need 3 coefficients, nitrogen 4")
    chi = float(_require(spec, "chi", context))
    if not 0.0 < chi < 1.0:
        raise ValidationError(f"{context}.chi must lie in (0, 1)")
    x_lo = float(_require(spec, "x_lower", context))
    x_hi = float(_require(spec, "x_upper", context))
    shift = float(spec.get("eps_shift", 1e-3))

    fuel_at = lambda x: fuel[0] * x * x + fuel[1] * x + fuel[2]
    sulfur_at = lambda x: sulfur[0] * x * x + sulfur[1] * x + sulfur[2]
    nitrogen_at = lambda x: nitrogen[0] * math.exp(nitrogen[1] * x) + nitrogen[2] * x + nitrogen[3]
    price = fuel_at(x_hi) / (sulfur_at(x_hi) + nitrogen_at(x_hi))
    w = (1.0 - chi) * price

    box = NonsmoothCost(kind="box_indicator", lower=np.array([x_lo]), upper=np.array([x_hi]))
    fuel_agent = SmoothCost(
        kind="quadratic", a=np.array([chi * fuel[0] - shift]), b=np.array([chi * fuel[1]])
    )
    sulfur_agent = SmoothCost(
        kind="quadratic", a=np.array([w * sulfur[0]]), b=np.array([w * sulfur[1]])
    )
    nitrogen_agent = SmoothCost(
        kind="quadratic_plus_exp",
        a=np.array([shift]),
        b=np.array([w * nitrogen[2]]),
        p=np.array([w * nitrogen[0]]),
        r=np.array([nitrogen[1]]),
    )
    return [
        AgentProblem(smooth=fuel_agent, nonsmooth=box),
        AgentProblem(smooth=sulfur_agent, nonsmooth=box),
        AgentProblem(smooth=nitrogen_agent, nonsmooth=box),
    ]


def scenario_from_dict(data: dict, name: str = None) -> Scenario:
    """Validate a scenario dictionary and build the runnable objects."""
    if not isinstance(data, dict):
        raise ValidationError("scenario root must be a JSON object")
    name = name or data.get("name", "scenario")
    m_dim = int(data.get("m_dim", 1))
    objective = data.get("objective", "min")
    if objective not in ("min", "max"):
        raise ValidationError("objective must be 'min' or 'max'")
    sign = -1.0 if objective == "max" else 1.0

    clusters = _require(data, "clusters", "scenario")
    if not isinstance(clusters, list) or not clusters:
        raise ValidationError("scenario.clusters must be a non-empty list")
    sizes = []
    intra = []
    agents: dict[tuple[int, int], AgentProblem] = {}
    for ci, cluster in enumerate(clusters, start=1):
        context = f"clusters[{ci - 1}]"
        size = int(_require(cluster, "size", context))
        sizes.append(size)
        intra.append([tuple(e) for e in cluster.get("intra_edges", [])])
        if "dispatch" in cluster:
            if objective == "max":
                raise ValidationError(f"{context}: dispatch clusters require a 'min' objective")
            built = _dispatch_agents(cluster["dispatch"], m_dim, f"{context}.dispatch")
            if size != len(built):
                raise ValidationError(f"{context}.size must be {len(built)} for dispatch clusters")
        else:
            specs = _require(cluster, "agents", context)
            if len(specs) != size:
                raise ValidationError(f"{context}.agents must list {size} agents")
            built = []
            for ai, spec in enumerate(specs):
                actx = f"{context}.agents[{ai}]"
                built.append(
                    AgentProblem(
                        smooth=_smooth_from_spec(_require(spec, "f", actx), sign, m_dim, f"{actx}.f"),
                        nonsmooth=_nonsmooth_from_spec(_require(spec, "g", actx), m_dim, f"{actx}.g"),
                    )
                )
        for aj, agent in enumerate(built, start=1):
            agents[(ci, aj)] = agent

    network = ClusterNetwork.build(sizes, intra, data.get("global_edges", []))

    coupling_spec = _require(data, "coupling", "scenario")
    matrix = _require(coupling_spec, "A", "scenario.coupling")
    rhs = _require(coupling_spec, "b", "scenario.coupling")
    sense = coupling_spec.get("sense", "le")
    if sense not in ("le", "eq"):
        raise ValidationError("scenario.coupling.sense must be 'le' or 'eq'")
    split = coupling_spec.get("split")
    coupling = make_coupling(matrix, rhs, sense, network, m_dim, user_split=split)

    boxes_spec = data.get("dual_boxes", {})
    boxes = DualBoxes(
        rho_cluster=float(boxes_spec.get("rho_Y", 100.0)),
        rho_coupling=float(boxes_spec.get("rho_J", 100.0)),
        sense=sense,
        cluster_sizes=network.cluster_sizes,
        m_dim=m_dim,
        coupling_rows=coupling.n_rows,
    )

    problem = ProblemModel(
        network=network, agents=agents, coupling=coupling, boxes=boxes, m_dim=m_dim
    )
    for i in range(1, network.n_clusters + 1):
        problem.cluster_primal_box(i)  # validates non-empty intersections

    delay_spec = data.get("delay", {})
    mode = delay_spec.get("mode", "uniform")
    table = delay_spec.get("table")
    if table is not None:
        table = {tuple(int(p) for p in k.split(",")): int(v) for k, v in table.items()}
    delay_cfg = {
        "q": int(delay_spec.get("q_max", 0)),
        "mode": mode,
        "seed": int(delay_spec.get("seed", 0)),
        "value": delay_spec.get("value"),
        "table": table,
    }

    solver_spec = data.get("solver", {})
    pi = solver_spec.get("pi", 1.0)
    if isinstance(pi, list):
        if len(pi) != network.n_agents:
            raise ValidationError("scenario.solver.pi must list one weight per agent")
        pi = {key: float(v) for key, v in zip(network.agents(), pi)}
    c = solver_spec.get("c", "auto")
    if isinstance(c, list):
        if len(c) != network.n_agents:
            raise ValidationError("scenario.solver.c must list one step per agent")
        c = {key: float(v) for key, v in zip(network.agents(), c)}
    solver_cfg = {
        "max_iters": int(solver_spec.get("max_iters", 20000)),
        "tol": float(solver_spec.get("tol", 1e-9)),
        "patience": int(solver_spec.get("patience", 50)),
        "pi": pi,
        "c": c,
        "log_stride": int(solver_spec.get("log_stride", 1)),
        "alpha0": solver_spec.get("alpha0"),
        "omega0": solver_spec.get("omega0"),
    }

    return Scenario(
        name=name,
        network=network,
        problem=problem,
        delay_cfg=delay_cfg,
        solver_cfg=solver_cfg,
        raw=_canonical(data),
    )


def _canonical(data):
    """Stable nested representation for round-trip comparisons."""
    return json.loads(json.dumps(data, sort_keys=True))


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a bundled scenario (``simA``, ``simB``, ``micro``)."""
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("asyndual.scenarios").joinpath(f"{stem}.json")
    with resources.as_file(ref) as path:
        if not path.exists():
            raise ValidationError(f"no bundled scenario named {name!r}")
        return Path(path)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario from a file path or bundled name."""
    p = Path(path)
    if not p.exists():
        p = bundled_scenario_path(str(path))
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file {p} is not valid JSON: {exc}") from None
    return scenario_from_dict(data, name=data.get("name", p.stem))


def serialize_scenario(scenario: Scenario) -> dict:
    """The canonical dictionary a scenario was built from."""
    return _canonical(scenario.raw)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(serialize_scenario(scenario), indent=2, sort_keys=True))
