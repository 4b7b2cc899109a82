"""Command-line interface: solve, sweep, check-structure, verify-lemma.

Exit codes are a public contract:
    0  success
    1  configuration error (parse or validation)
    2  solver failure (diagnosis embedded in the report)
    3  condition violation (structure conditions, coefficient signs, lemma)
    4  uniformity warning (sweep solved but monitored norms not eps-uniform)
"""

from __future__ import annotations

import argparse
import pathlib
import sys

import numpy as np

from .config import RunSetup, build_runsetup, parse_config
from .errors import ConfigError, HessObsError, SolverError, StructureViolation
from .monitors import (
    audit_inequalities,
    compute_norm_bundle,
    extract_contact_set,
    sweep_summary,
)
from .newton import continuation_solve, default_initializer
from .operator import certify_coefficients, evaluate_state
from .report import ReportBundleWriter, fmt
from .symfunc import check_structure_conditions, estimate_theta, sample_cone_points

__all__ = ["main", "cmd_solve", "cmd_sweep", "cmd_check_structure", "cmd_verify_lemma"]


def _load(config_path: str, args) -> RunSetup:
    text = pathlib.Path(config_path).read_text()
    cfg = parse_config(text)
    cfg = cfg.override(
        eps_min=getattr(args, "eps_min", None),
        grid_m=getattr(args, "grid_m", None),
        seed=getattr(args, "seed", None),
        audit_enabled=(
            None if getattr(args, "audit", None) is None else args.audit == "on"
        ),
    )
    return build_runsetup(cfg)


def _say(args, *msg):
    if not getattr(args, "quiet", False):
        print(*msg)


def _eps_tag(eps: float) -> str:
    return f"{eps:.0e}"


def _run_and_report(rs: RunSetup, args, gate_uniformity: bool) -> int:
    out = ReportBundleWriter(args.out)
    doc = {"config": {"text": rs.config.to_text()}, "epsilons": rs.schedule.values()}
    try:
        result = continuation_solve(rs.problem, rs.schedule, rs.newton)
    except SolverError as exc:
        doc["solver_failure"] = {
            "error": type(exc).__name__,
            "message": str(exc),
            "epsilon": getattr(exc, "epsilon", None),
        }
        out.write_json("report.json", doc)
        _say(args, f"solver failed: {exc}")
        return 2

    bundles = []
    audits = []
    solves = []
    hist_rows = []
    for u, eps, rep in zip(result.solutions, result.epsilons, result.reports):
        b = compute_norm_bundle(u, rs.problem, eps)
        bundles.append(b)
        solves.append(
            {
                "epsilon": eps,
                "converged": rep.converged,
                "iterations": rep.iterations,
                "final_residual": rep.residual_history[-1],
                "final_margin": rep.final_margin,
                "subsolution_dominance": rep.subsolution_dominance,
            }
        )
        for it, rmax in enumerate(rep.residual_history):
            step = rep.step_history[it - 1] if it >= 1 else ""
            hist_rows.append((eps, it, rmax, rep.residual_l2_history[it], step,
                              rep.margin_history[it]))
        if rs.audit.enabled:
            sub = rs.problem.subsolution
            if sub is None:
                sub = default_initializer(rs.problem)
            aud = audit_inequalities(
                u, sub, rs.problem, eps,
                c_audit=(None if rs.audit.c_audit == 0 else rs.audit.c_audit),
                theta_samples=rs.audit.theta_samples, seed=rs.audit.seed,
            )
            audits.append(
                {
                    "epsilon": eps,
                    "zeta0": aud.zeta0,
                    "theta_hat": aud.theta_hat,
                    "case1_points": aud.case1_points,
                    "case2_points": aud.case2_points,
                    "worst_slack_case1": aud.worst_slack_case1,
                    "worst_slack_case2": aud.worst_slack_case2,
                    "worst_slack_diag": aud.worst_slack_diag,
                    "fprime_worst": aud.fprime_worst,
                    "tol_audit": aud.tol_audit,
                    "violations": aud.violations,
                }
            )

    sweep = sweep_summary(bundles)
    final_eps = result.epsilons[-1]
    final_bundle = bundles[-1]
    h_clears = bool(
        ((rs.problem.h - rs.problem.phi)[rs.problem.grid.boundary_mask()]).min() > 0
    )
    contact = extract_contact_set(
        result.final, rs.problem.h, rs.problem.grid, final_eps,
        final_bundle.penalty_sup, final_bundle.hess_norm,
        h_above_phi_on_boundary=h_clears,
    )

    doc["solves"] = solves
    doc["norms"] = sweep.rows
    doc["sweep"] = {"ratios": sweep.ratios, "warnings": sweep.warnings}
    doc["audits"] = audits
    doc["contact"] = {
        "epsilon": final_eps,
        "tau": contact.tau,
        "cells": contact.cells,
        "interface_cells": contact.interface_cells,
    }
    out.write_json("report.json", doc)

    out.write_csv(
        "norms_vs_eps.csv",
        ["epsilon", "c0_norm", "grad_norm", "hess_norm", "hess_entry_norm",
         "penalty_sup", "obstacle_violation", "bound_ok"],
        [[r["epsilon"], r["c0_norm"], r["grad_norm"], r["hess_norm"],
          r["hess_entry_norm"], r["penalty_sup"], r["obstacle_violation"],
          r["bound_ok"]] for r in sweep.rows],
        "per-epsilon monitors: c0/grad/hess norms (max over points), penalty sup, max (u-h)_+",
    )
    out.write_csv(
        "residual_history.csv",
        ["epsilon", "iteration", "residual_max", "residual_l2", "step", "margin"],
        hist_rows,
        "damped-Newton history per epsilon: max/l2 residual norms, accepted step, cone margin",
    )
    idx = np.argwhere(contact.mask)
    grid = rs.problem.grid
    pts = grid.interior_points().reshape(-1, grid.n)
    flat = np.ravel_multi_index(idx.T, grid.interior_shape) if idx.size else np.array([], dtype=int)
    contact_rows = []
    for row, f in zip(idx, flat):
        coords = pts[f]
        contact_rows.append(
            tuple(int(v) + 1 for v in row)
            + tuple(float(c) for c in coords)
            + (bool(contact.interface[tuple(row)]),)
        )
    out.write_csv(
        "contact_cells.csv",
        [f"i{d+1}" for d in range(grid.n)] + [f"x{d+1}" for d in range(grid.n)] + ["interface"],
        contact_rows,
        f"contact cells at the final epsilon (tau = {fmt(contact.tau)}); grid indices, coordinates, interface flag",
    )
    binary = getattr(args, "field_format", "text") == "binary"
    for u, eps in zip(result.solutions, result.epsilons):
        out.write_field(f"u_eps_{_eps_tag(eps)}", grid, u, binary=binary)

    for s in solves:
        _say(args, f"epsilon {fmt(s['epsilon'])}: {s['iterations']} iterations, "
             f"residual {fmt(s['final_residual'])}, margin {fmt(s['final_margin'])}")
    _say(args, f"contact cells: {contact.cells}; sweep ratios: "
         + ", ".join(f"{k}={fmt(v)}" for k, v in sweep.ratios.items()))

    if gate_uniformity and sweep.warnings:
        _say(args, f"uniformity warning: {', '.join(sweep.warnings)} exceed ratio 2")
        return 4
    return 0


def cmd_solve(args) -> int:
    try:
        rs = _load(args.config, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _run_and_report(rs, args, gate_uniformity=False)
    except HessObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_sweep(args) -> int:
    try:
        rs = _load(args.config, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _run_and_report(rs, args, gate_uniformity=True)
    except HessObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_check_structure(args) -> int:
    try:
        rs = _load(args.config, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else rs.audit.seed
    doc = {"family": str(rs.problem.fspec)}
    code = 0
    try:
        rep = check_structure_conditions(rs.problem.fspec, args.samples, seed, K0=args.k0)
        doc["structure"] = {
            "samples": rep.sample_count,
            "K0": rep.K0,
            "min_grad_component": rep.min_grad_component,
            "max_hess_eig_scaled": rep.max_hess_eig_scaled,
            "min_f": rep.min_f,
            "min_euler_bound": rep.min_euler_bound,
            "nu0_hat": rep.nu0_hat,
            "boundary_decay_ratios": rep.boundary_decay_ratios,
            "ladder_monotone": rep.ladder_monotone,
            "passed": rep.passed(),
        }
        _say(args, f"structure conditions: pass ({args.samples} samples)")
    except StructureViolation as exc:
        doc["structure"] = {"passed": False, "condition": exc.condition,
                            "witness": list(np.atleast_1d(exc.witness).ravel())}
        _say(args, f"structure violation: {exc}")
        code = 3

    cert = certify_coefficients(rs.problem, samples=max(64, args.samples // 4), seed=seed)
    doc["coefficients"] = {
        "passed": cert.passed,
        "checks": cert.checks,
        "failed_condition": cert.failed_condition,
    }
    if cert.passed:
        _say(args, "coefficient conditions: pass "
             + ", ".join(f"{k} (worst {fmt(v)})" for k, v in cert.checks.items()))
    else:
        _say(args, f"coefficient condition violated: {cert.failed_condition} "
             f"at {cert.witness}")
        code = 3
    if args.out:
        ReportBundleWriter(args.out).write_json("check_structure.json", doc)
    return code


def cmd_verify_lemma(args) -> int:
    try:
        rs = _load(args.config, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else rs.audit.seed
    samples = args.samples if args.samples is not None else rs.audit.theta_samples
    sub = rs.problem.subsolution
    if sub is None:
        sub = default_initializer(rs.problem)
    st = evaluate_state(sub, rs.problem, rs.schedule.eps0)
    if not st.admissible:
        print("error: subsolution not admissible, cannot form the compact set",
              file=sys.stderr)
        return 2
    K = np.unique(np.round(st.lam, 12), axis=0)
    if args.zeta is not None:
        zeta = args.zeta
    else:
        nu = st.fgrad / np.linalg.norm(st.fgrad, axis=1, keepdims=True)
        n = rs.problem.grid.n
        zeta = float(min(nu.min() / 2.0, (1.0 - 1e-6) / (2.0 * np.sqrt(n))))
    lam = sample_cone_points(rs.problem.fspec, samples, seed)
    cert = estimate_theta(rs.problem.fspec, K, zeta, lam)
    doc = {
        "zeta": cert.zeta,
        "theta_hat": cert.theta_hat,
        "vacuous": cert.vacuous,
        "sample_count": cert.sample_count,
        "pair_count": cert.pair_count,
        "violations_at_zero": cert.violations_at_zero,
        "min_bracket": cert.min_bracket,
        "K_size": int(K.shape[0]),
        "seed": seed,
    }
    if args.out:
        ReportBundleWriter(args.out).write_json("theta_certificate.json", doc)
    if cert.vacuous:
        _say(args, f"certificate: vacuous (no sampled pair with normal gap >= {fmt(zeta)})")
    else:
        _say(args, f"certificate: theta_hat = {fmt(cert.theta_hat)} over "
             f"{cert.pair_count} pairs (zeta = {fmt(zeta)}, {samples} samples, seed {seed})")
    if cert.violations_at_zero > 0:
        _say(args, f"{cert.violations_at_zero} pairs violate the concavity inequality "
             "at theta = 0: implementation bug")
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hessobs",
        description="Penalized solver and estimate monitors for obstacle problems "
        "of Hessian-type fully nonlinear elliptic equations.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_out_required=False):
        sp.add_argument("config", help="problem configuration file")
        sp.add_argument("--out", required=with_out_required, default=None,
                        help="output directory for the report bundle")
        sp.add_argument("--eps-min", type=float, default=None, dest="eps_min",
                        help="override schedule floor")
        sp.add_argument("--grid-m", type=int, default=None, dest="grid_m",
                        help="override points per axis")
        sp.add_argument("--seed", type=int, default=None, help="override audit seed")
        sp.add_argument("--audit", choices=["on", "off"], default=None,
                        help="override audit.enabled")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")
        sp.add_argument("--field-format", choices=["text", "binary"], default="text",
                        dest="field_format", help="grid dump format (default text)")

    sp = sub.add_parser("solve", help="run the penalized continuation solve")
    common(sp, with_out_required=True)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("sweep", help="full epsilon sweep with monitors and audits")
    common(sp, with_out_required=True)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("check-structure",
                        help="certify structure and coefficient conditions")
    sp.add_argument("config")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--k0", type=float, default=0.0,
                    help="constant in the Euler-type lower bound check")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(fn=cmd_check_structure)

    sp = sub.add_parser("verify-lemma",
                        help="sampled certificate for the supporting-hyperplane constant")
    sp.add_argument("config")
    sp.add_argument("--zeta", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(fn=cmd_verify_lemma)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
