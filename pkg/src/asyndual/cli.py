"""Command-line entry points: run, certify, oracle, diagnose.

Exit codes: 0 on success, 1 on validation/usage errors, 2 on numerical
failures.  ``run`` writes ``summary.csv`` (columns
``t,H,H_erg,Znorm,Znorm_erg,eps``), ``report.json``, and optionally
``state.csv`` with the full stacked state per step; ``diagnose`` consumes
those files and emits a certificate report.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import NumericalError, ValidationError
from .delays import d_from_q
from .diagnostics import check_lemma2, check_theorem1, fit_rate, gap_ratio
from .operators import assemble, certify_step_sizes
from .oracles import reference_solution
from .scenario import load_scenario
from .solver import run as run_solver

SUMMARY_COLUMNS = ["t", "H", "H_erg", "Znorm", "Znorm_erg", "eps"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _state_columns(ops):
    lay = ops.layout
    names = []
    for (i, j) in lay.agents:
        names += [f"mu_{i}_{j}_{k}" for k in range(lay.m_dim)]
        n_i = lay.network.cluster_sizes[i - 1]
        names += [f"gamma_{i}_{j}_{k}" for k in range(n_i * lay.m_dim)]
        names += [f"theta_{i}_{j}_{k}" for k in range(lay.coupling_rows)]
    omega_names = [None] * lay.omega_size
    for (i, j, l), sl in lay.xi_slices.items():
        for k in range(sl.stop - sl.start):
            omega_names[sl.start + k] = f"xi_{i}_{j}_{l}_{k}"
    for (i, j, n), sl in lay.zeta_slices.items():
        for k in range(sl.stop - sl.start):
            omega_names[sl.start + k] = f"zeta_{i}_{j}_{n}_{k}"
    return names + omega_names


def write_summary_csv(report, path):
    rows = report.trajectory
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for k in range(len(rows["t"])):
            writer.writerow(
                [int(rows["t"][k])]
                + [f"{rows[col][k]:.17g}" for col in SUMMARY_COLUMNS[1:]]
            )


def write_state_csv(report, path):
    if report.alpha_history is None:
        raise ValidationError("state output requires a run with recorded state")
    names = _state_columns(report.ops)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "stamp"] + names)
        d = report.d
        for t in range(report.alpha_history.shape[0]):
            stamp = max(0, t - d)
            row = np.concatenate([report.alpha_history[t], report.omega_history[t]])
            writer.writerow([t, stamp] + [f"{v:.17g}" for v in row])


def report_payload(report):
    payload = {
        "scenario": report.name,
        "q": report.q,
        "d": report.d,
        "engine": report.engine,
        "iterations": report.iterations,
        "converged": report.converged,
        "runtime_s": report.runtime_s,
        "x_last": report.x_last.tolist(),
        "x_ergodic": report.x_ergodic.tolist(),
        "H_last": report.H_last,
        "eps_last": float(report.trajectory["eps"][-1]),
        "Znorm_last": float(report.trajectory["Znorm"][-1]),
        "certificate": {
            k: (v if not isinstance(v, dict) else {str(kk): vv for kk, vv in v.items()})
            for k, v in report.certificate.items()
        },
        "channel": report.channel,
    }
    if report.oracle is not None:
        payload["oracle"] = {
            "x": report.oracle.x.tolist(),
            "multiplier": report.oracle.multiplier.tolist(),
            "objective": report.oracle.objective,
            "method": report.oracle.method,
        }
        if report.h_star is not None:
            payload["strong_duality_rel_error"] = abs(-report.H_last - report.oracle.objective) / max(
                abs(report.oracle.objective), 1e-12
            )
    return payload


def _cmd_run(args):
    scenario = load_scenario(args.scenario)
    report = run_solver(
        scenario,
        seed=args.seed,
        max_iters=args.max_iters,
        qmax=args.qmax,
        delay_mode=args.delay_mode,
        log_stride=args.log_stride,
        engine=args.engine,
        record_state=args.state_out,
        allow_uncertified=args.allow_uncertified,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(report, out / "summary.csv")
    if args.state_out:
        write_state_csv(report, out / "state.csv")
    (out / "report.json").write_text(json.dumps(report_payload(report), indent=2))
    x = ", ".join(f"{v:.4f}" for v in report.x_last)
    print(f"{report.name}: {report.iterations} iterations, converged={report.converged}")
    print(f"x (last iterate) = [{x}]")
    print(f"outputs in {out}/")
    return 0


def _cmd_certify(args):
    scenario = load_scenario(args.scenario)
    q = args.qmax if args.qmax is not None else scenario.delay_cfg["q"]
    ops = assemble(
        scenario.network, scenario.problem, d_from_q(q), pi=scenario.solver_cfg["pi"]
    )
    c_spec = scenario.solver_cfg.get("c", "auto")
    cert = certify_step_sizes(ops, None if c_spec == "auto" else c_spec)
    print(f"c_max            = {cert['c_max']:.6e}")
    print(f"h (max agent)    = {cert['h_max']:.6e}")
    print(f"tau_max(Z^T B Z) = {cert['tau_max_ZBZ']:.6e}")
    print(f"min eig (descent condition)   = {cert['min_eig_descent']:.3e}  ok={cert['descent_ok']}")
    print(f"min eig (consensus condition) = {cert['min_eig_consensus']:.3e}  ok={cert['consensus_ok']}")
    return 0 if (cert["descent_ok"] and cert["consensus_ok"]) else 2


def _cmd_oracle(args):
    scenario = load_scenario(args.scenario)
    sol = reference_solution(scenario.problem)
    x = ", ".join(f"{v:.6f}" for v in sol.x)
    print(f"method      = {sol.method}")
    print(f"x*          = [{x}]")
    print(f"multiplier* = {sol.multiplier.tolist()}")
    print(f"F(x*)       = {sol.objective:.8f}")
    return 0


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    data = np.asarray(rows)
    return header, data


def _cmd_diagnose(args):
    scenario = load_scenario(args.scenario)
    q = args.qmax if args.qmax is not None else scenario.delay_cfg["q"]
    d = d_from_q(q)
    ops = assemble(scenario.network, scenario.problem, d, pi=scenario.solver_cfg["pi"])
    c_spec = scenario.solver_cfg.get("c", "auto")
    cert = certify_step_sizes(ops, None if c_spec == "auto" else c_spec)

    header, data = _read_csv(args.summary)
    if header[: len(SUMMARY_COLUMNS)] != SUMMARY_COLUMNS:
        raise ValidationError(f"{args.summary}: unexpected columns {header}")
    ts = data[:, 0]
    h_col = data[:, 1]
    h_erg = data[:, 2]
    z_erg = data[:, 4]

    oracle = reference_solution(scenario.problem)
    h_star = -oracle.objective
    gaps = np.abs(h_erg - h_star)

    out = {
        "scenario": scenario.name,
        "q": int(q),
        "d": int(d),
        "certificate": {k: v for k, v in cert.items() if not isinstance(v, dict)},
        "h_star": h_star,
        "eps_final": float(
            abs(h_col[-1] - h_star) / abs(h_star) if abs(h_star) > 1e-12 else abs(h_col[-1] - h_star)
        ),
        "rate_slope_H": fit_rate(ts, gaps),
        "rate_slope_Znorm": fit_rate(ts, z_erg),
        "ratio_H_half_horizon": gap_ratio(ts, gaps, int(ts[-1] / 2), int(ts[-1])),
        "ratio_Znorm_half_horizon": gap_ratio(ts, z_erg, int(ts[-1] / 2), int(ts[-1])),
    }

    if args.state:
        sheader, sdata = _read_csv(args.state)
        n_alpha = ops.layout.alpha_size
        n_omega = ops.layout.omega_size
        if len(sheader) != 2 + n_alpha + n_omega:
            raise ValidationError(
                f"{args.state}: expected {2 + n_alpha + n_omega} columns for this scenario"
            )
        steps = sdata[:, 0].astype(int)
        if np.any(np.diff(steps) != 1):
            raise ValidationError(f"{args.state}: trajectory checks need stride-1 state logs")
        alpha_hist = sdata[:, 2 : 2 + n_alpha]
        omega_hist = sdata[:, 2 + n_alpha :]
        T = alpha_hist.shape[0] - 2
        lemma = check_lemma2(ops, alpha_hist, omega_hist, T)
        out["lemma2"] = {
            **{k: float(v) for k, v in lemma.items()},
            "holds": bool(lemma["stale_slack"] >= -1e-9 and lemma["drift_slack"] >= -1e-9),
        }
        thm = check_theorem1(
            ops,
            scenario.problem,
            alpha_hist,
            omega_hist,
            alpha_hist[-1],
            omega_hist[-1],
            h_star,
        )
        out["theorem1"] = {
            "xi": thm["xi"],
            "holds": thm["holds"],
            "points_checked": len(thm["lhs"]),
        }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(out, indent=2))
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asyndual", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file or bundled name")
        p.add_argument("--qmax", type=int, default=None, help="override the delay bound")

    p_run = sub.add_parser("run", help="execute a scenario")
    common(p_run)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--max-iters", type=int, default=None)
    p_run.add_argument("--delay-mode", choices=["uniform", "constant", "table"], default=None)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--log-stride", type=int, default=None)
    p_run.add_argument("--engine", choices=["stacked", "per_agent"], default="stacked")
    p_run.add_argument("--state-out", action="store_true", help="also write state.csv")
    p_run.add_argument("--allow-uncertified", action="store_true")

    p_cert = sub.add_parser("certify", help="print the step-size certificate")
    common(p_cert)

    p_oracle = sub.add_parser("oracle", help="print the centralized reference solution")
    common(p_oracle)

    p_diag = sub.add_parser("diagnose", help="evaluate certificates on recorded outputs")
    common(p_diag)
    p_diag.add_argument("--summary", required=True)
    p_diag.add_argument("--state", default=None)
    p_diag.add_argument("--out", default="out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "run": _cmd_run,
            "certify": _cmd_certify,
            "oracle": _cmd_oracle,
            "diagnose": _cmd_diagnose,
        }[args.command]
        return handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
