"""Command-line entry point: ``spinorbit <subcommand> [--config PATH] ...``.

Every report is written as sorted-key JSON and every table as CSV, with no
timestamps or host details, so identical config and seed give identical bytes.

Exit codes: 0 success, 2 config error, 3 verification failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from . import kinematics as kin
from .config import ConfigError, RunConfig
from .dynamics import rayleigh_power, simulate, write_trajectory
from .equilibrium import (
    EquilibriumError,
    IndefiniteHessianError,
    NewtonDivergenceError,
    OrderingViolationError,
    find_equilibrium,
    lasalle_experiment,
)

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_NUMERIC = 0, 2, 3, 4

# A reflection: closes to the full 48-element octahedral group, not the chiral one.
TAMPERED_GENERATOR = np.diag([-1, 1, 1])


def _dump(obj, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _equilibrium_exit(exc: EquilibriumError) -> int:
    if isinstance(exc, (OrderingViolationError, IndefiniteHessianError)):
        return EXIT_VERIFY
    return EXIT_NUMERIC


# --- group-check ---

def group_check(tampered: bool = False, point_cloud: Optional[str] = None) -> dict:
    """Group axioms, brute-force comparison and the fiber over diag(1, 2, 3)."""
    gens = list(kin.GENERATORS)
    if tampered:
        gens[0] = TAMPERED_GENERATOR
    failures = []
    group = kin.chiral_octahedral_group(gens)
    keys = {g.tobytes() for g in group}
    eye = np.eye(3, dtype=group[0].dtype)
    closure = all((a @ b).tobytes() in keys for a in group for b in group)
    inverses = all(g.T.tobytes() in keys and np.array_equal(g @ g.T, eye) for g in group)
    proper = all(round(np.linalg.det(g)) == 1 for g in group)
    brute = {g.astype(group[0].dtype).tobytes() for g in kin.signed_permutation_rotations()}
    checks = {
        "order": len(group),
        "order_is_24": len(group) == 24,
        "closed_under_product": closure,
        "closed_under_inverse": inverses,
        "contains_identity": eye.tobytes() in keys,
        "all_proper_rotations": proper,
        "matches_brute_force": keys == brute,
    }
    tensor = np.diag([1.0, 2.0, 3.0])
    fiber = kin.covering_fiber(tensor)
    exact = all(np.array_equal(f @ d @ f.T, tensor) for f, d in fiber)
    distinct = len({f.tobytes() + d.tobytes() for f, d in fiber})
    checks.update({
        "fiber_size": len(fiber),
        "fiber_distinct": distinct,
        "fiber_exact_reconstructions": exact,
        "fiber_is_24": len(fiber) == 24 and distinct == 24 and exact,
    })
    for name, ok in checks.items():
        if isinstance(ok, bool) and not ok:
            failures.append(name)
    report = {"tampered": tampered, "checks": checks, "failures": failures}
    if point_cloud is not None:
        body = kin.load_point_cloud(point_cloud)
        inertia = kin.inertia_from_body(body)
        moments, frame = kin.principal_axes(inertia)
        report["point_cloud"] = {
            "path": point_cloud,
            "n_points": int(body.masses.size),
            "total_mass": body.total_mass,
            "inertia_tensor": inertia.tolist(),
            "principal_moments": moments.tolist(),
            "principal_frame": frame.tolist(),
            "fiber_size": len(kin.covering_fiber(inertia)),
        }
    return report


def cmd_group_check(args) -> int:
    try:
        report = group_check(args.tamper, args.point_cloud)
    except (kin.DegenerateBodyError, kin.DegenerateConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, OSError) else EXIT_VERIFY
    _dump(report, os.path.join(args.out_dir, "group_check.json"))
    c = report["checks"]
    print(f"group order {c['order']}, closure {c['closed_under_product']}, "
          f"brute-force match {c['matches_brute_force']}, fiber {c['fiber_size']} "
          f"({c['fiber_distinct']} distinct)")
    if report["failures"]:
        print("FAILED: " + ", ".join(report["failures"]))
        return EXIT_VERIFY
    print("PASS")
    return EXIT_OK


# --- equilibrium / simulate / verify ---

def cmd_equilibrium(cfg: RunConfig, out: str) -> int:
    params = cfg.params()
    report = {"config": cfg.to_dict()}
    try:
        eq = find_equilibrium(cfg.p, params)
    except EquilibriumError as exc:
        report.update({"status": type(exc).__name__, "message": str(exc), "ordering_verdict": "FAIL"})
        _dump(report, os.path.join(out, "equilibrium.json"))
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _equilibrium_exit(exc)
    report.update({"status": "converged", "equilibrium": eq.summary(),
                   "ordering_verdict": "PASS" if eq.ordered else "FAIL"})
    _dump(report, os.path.join(out, "equilibrium.json"))
    print(f"Rbar={eq.Rbar:.12g} J={eq.Jbar.tolist()} z={eq.zbar.tolist()} "
          f"ordering {report['ordering_verdict']}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    params = cfg.params()
    try:
        eq = find_equilibrium(cfg.p, params)
    except EquilibriumError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _equilibrium_exit(exc)
    start = cfg.perturbation().apply(eq.state())
    rec = simulate(start, cfg.p, params, cfg.t_end, diss=cfg.dissipation(), tol=cfg.tolerances(),
                   sample_dt=cfg.sample_dt, equilibrium=eq)
    os.makedirs(out, exist_ok=True)
    write_trajectory(rec, os.path.join(out, "trajectory.csv"))
    E = rec.energies
    summary = {
        "config": cfg.to_dict(),
        "equilibrium": eq.summary(),
        "status": rec.status,
        "message": rec.message,
        "n_steps": rec.n_steps,
        "t_reached": float(rec.times[-1]),
        "energy_initial": float(E[0]),
        "energy_final": float(E[-1]),
        "energy_drift_relative": float(np.max(np.abs(E - E[0])) / abs(E[0])),
        "max_step_energy_increase": rec.max_step_energy_increase,
        "final_manifold_distance": float(rec.manifold_distance[-1]),
    }
    _dump(summary, os.path.join(out, "simulate.json"))
    print(f"{rec.status}: t={summary['t_reached']:g}, {rec.n_steps} steps, "
          f"energy drift {summary['energy_drift_relative']:.3e}")
    return EXIT_OK if rec.ok else EXIT_NUMERIC


def expected_classification(diss) -> str:
    return "stable, not asymptotic" if diss is None else "asymptotically stable"


def cmd_verify(cfg: RunConfig, out: str) -> int:
    params = cfg.params()
    try:
        eq = find_equilibrium(cfg.p, params)
    except EquilibriumError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _equilibrium_exit(exc)
    diss = cfg.dissipation()
    report, rec = lasalle_experiment(eq, params, cfg.perturbation(), diss, cfg.t_end,
                                     cfg.thresholds(), cfg.tolerances(), cfg.sample_dt)
    os.makedirs(out, exist_ok=True)
    write_trajectory(rec, os.path.join(out, "trajectory.csv"))
    expected = expected_classification(diss)
    body = {
        "config": cfg.to_dict(),
        "equilibrium": eq.summary(),
        "report": report.to_dict(),
        "expected_classification": expected,
        "matches_expectation": report.classification == expected,
    }
    if rec.ok and diss is not None:
        power = np.array([rayleigh_power(rec.state(i), diss) for i in range(rec.times.size)])
        scale = float(np.max(np.abs(power)))
        body["energy_balance_relative"] = float(np.max(np.abs(-rec.energy_rates - power)) / scale) if scale else 0.0
    _dump(body, os.path.join(out, "verify.json"))
    print(f"verdict {report.verdict}: {report.classification} (expected {expected})")
    if report.verdict == "INCONCLUSIVE":
        return EXIT_NUMERIC
    return EXIT_OK if body["matches_expectation"] else EXIT_VERIFY


# --- sweep ---

SWEEP_COLUMNS = ["epsilon", "p", "eta", "status", "Rbar", "R0", "dR", "J1", "J2", "J3",
                 "norm_Jz", "norm_Jz_over_eps", "dR_over_eps", "linear_scaling",
                 "min_transversal_eig", "ordering", "verdict"]


def _sweep_point(task) -> dict:
    """One grid point; writes its own JSON file and returns the table row."""
    index, data, path = task
    cfg = RunConfig.from_dict(data)
    params = cfg.params()
    eps = params.elastic.epsilon
    eta = cfg.data["dissipation"]["eta"]
    row = {"epsilon": eps, "p": cfg.p, "eta": eta if np.isscalar(eta) else float(np.max(np.abs(eta)))}
    detail = {"index": index, "config": cfg.to_dict()}
    try:
        eq = find_equilibrium(cfg.p, params)
    except EquilibriumError as exc:
        row.update({"status": type(exc).__name__, "ordering": "FAIL", "verdict": "FAIL"})
        detail["row"], detail["message"] = row, str(exc)
        _dump(detail, path)
        return row
    norm = float(np.linalg.norm(np.concatenate([eq.Jbar, eq.zbar])))
    row.update({
        "status": "converged", "Rbar": eq.Rbar, "R0": eq.R0, "dR": eq.Rbar - eq.R0,
        "J1": float(eq.Jbar[0]), "J2": float(eq.Jbar[1]), "J3": float(eq.Jbar[2]),
        "norm_Jz": norm, "norm_Jz_over_eps": norm / eps, "dR_over_eps": (eq.Rbar - eq.R0) / eps,
        "min_transversal_eig": float(eq.transversal_hessian_eigs.min()),
        "ordering": "PASS" if eq.ordered else "FAIL",
    })
    verdict = "PASS"
    if cfg.data["sweep"]["verify"]:
        diss = cfg.dissipation()
        rep, _ = lasalle_experiment(eq, params, cfg.perturbation(), diss, cfg.t_end,
                                    cfg.thresholds(), cfg.tolerances(), cfg.sample_dt)
        detail["report"] = rep.to_dict()
        if rep.verdict == "INCONCLUSIVE":
            verdict = "INCONCLUSIVE"
        elif rep.classification != expected_classification(diss):
            verdict = "FAIL"
    row["verdict"] = verdict
    detail["equilibrium"] = eq.summary()
    detail["row"] = row
    _dump(detail, path)
    return row


def sweep_tasks(cfg: RunConfig, out: str) -> list:
    sw = cfg.data["sweep"]
    eps_list = sw["epsilon"] or [cfg.data["elastic"]["epsilon"]]
    p_list = sw["p"] or [cfg.p]
    eta_list = sw["eta"] or [cfg.data["dissipation"]["eta"]]
    tasks = []
    for i, (p, eta, eps) in enumerate(itertools.product(p_list, eta_list, eps_list)):
        data = cfg.override(**{"p": p, "dissipation.eta": eta, "elastic.epsilon": eps}).to_dict()
        tasks.append((i, data, os.path.join(out, "sweep", f"point_{i:03d}.json")))
    return tasks


def _add_linear_scaling(rows: list) -> None:
    """``norm_Jz/eps`` relative to its value at the smallest eps with the same (p, eta)."""
    for key, group in itertools.groupby(sorted(range(len(rows)), key=lambda i: (rows[i]["p"], rows[i]["eta"])),
                                        key=lambda i: (rows[i]["p"], rows[i]["eta"])):
        idx = [i for i in group if rows[i]["status"] == "converged"]
        if not idx:
            continue
        ref = rows[min(idx, key=lambda i: rows[i]["epsilon"])]["norm_Jz_over_eps"]
        for i in idx:
            rows[i]["linear_scaling"] = rows[i]["norm_Jz_over_eps"] / ref


def run_sweep(cfg: RunConfig, out: str, jobs: int = 1) -> list:
    tasks = sweep_tasks(cfg, out)
    os.makedirs(os.path.join(out, "sweep"), exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    # every point has finished here; assemble the table
    _add_linear_scaling(rows)
    with open(os.path.join(out, "sweep.csv"), "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in SWEEP_COLUMNS])
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.16e}"
    return str(v)


def cmd_sweep(cfg: RunConfig, out: str, jobs: int) -> int:
    rows = run_sweep(cfg, out, jobs)
    for r in rows:
        print(f"eps={r['epsilon']:.1e} p={r['p']:g} status={r['status']} "
              f"scaling={r.get('linear_scaling', float('nan')):.4f} verdict={r['verdict']}")
    if any(r["status"] not in ("converged", "OrderingViolationError", "IndefiniteHessianError") for r in rows):
        return EXIT_NUMERIC
    if any(r["verdict"] == "INCONCLUSIVE" for r in rows):
        return EXIT_NUMERIC
    if any(r["verdict"] != "PASS" for r in rows):
        return EXIT_VERIFY
    return EXIT_OK


# --- argument handling ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="seed for the perturbation direction")
    common.add_argument("--t-end", type=float, dest="t_end", help="integration horizon")
    common.add_argument("--epsilon", type=float, help="elastic stiffness parameter")

    parser = argparse.ArgumentParser(prog="spinorbit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("group-check", parents=[common], help="check the chiral octahedral group")
    g.add_argument("--tamper", action="store_true", help="replace a generator (negative test)")
    g.add_argument("--point-cloud", metavar="PATH", help="also report on an 'x y z m' point cloud")
    sub.add_parser("equilibrium", parents=[common], help="locate the resonant equilibrium")
    sub.add_parser("simulate", parents=[common], help="integrate from a perturbed equilibrium")
    sub.add_parser("verify", parents=[common], help="run the relaxation experiment")
    s = sub.add_parser("sweep", parents=[common], help="equilibria (and experiments) over a grid")
    s.add_argument("--jobs", type=int, default=1, help="concurrent grid points")
    return parser


def load_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = RunConfig.load(args.config)
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
    else:
        cfg = RunConfig.from_dict({})
    changes = {}
    if args.out is not None:
        changes["output.dir"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.t_end is not None:
        changes["experiment.t_end"] = args.t_end
    if args.epsilon is not None:
        changes["elastic.epsilon"] = args.epsilon
    return cfg.override(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.out_dir
    args.out_dir = out
    try:
        if args.command == "group-check":
            return cmd_group_check(args)
        if args.command == "equilibrium":
            return cmd_equilibrium(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        return cmd_sweep(cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, NewtonDivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
