"""Command-line front end.

Exit codes: 0 success, 1 unreadable or malformed input, 2 numerical failure
(singular design, no root, solver failure), 3 equivalence check refuted.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import CompositeDesign, SharingMode, validate_design
from .criteria import SingularDesignError, bayes_logdet, check_equivalence, d_efficiency
from .io import Problem, ProblemError, design_to_dict, dump, load_design, load_problem
from .pso import optimize
from .saturated import (CaseSelectionError, NoRootError, group_marginals, locally_d_optimal,
                        saturated_design)

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_REFUTED = 0, 1, 2, 3
REPORT_DIGITS = 7

_NUMERIC_ERRORS = (SingularDesignError, NoRootError, CaseSelectionError, OverflowError,
                   FloatingPointError, RuntimeError)


class _NumericFailure(Exception):
    pass


def _g(x: float, digits: int = REPORT_DIGITS) -> float:
    return float(f"{x:.{digits}g}")


def _design_table(xi: CompositeDesign) -> str:
    lines = []
    for i, g in enumerate(xi.groups, 1):
        lam = xi.allocation.lambdas[i - 1]
        lines.append(f"group {i}  (lambda = {lam:.7g})")
        lines.append("    dose          weight")
        for d, w in zip(g.points, g.weights):
            lines.append(f"    {d:<12.7g}  {w:.7g}")
    return "\n".join(lines)


def _compatible(problem: Problem, xi: CompositeDesign, source: str) -> None:
    res = validate_design(xi, problem.structure)
    if not res.ok:
        raise ProblemError(f"{source}: design does not fit the problem: "
                           + "; ".join(res.violations))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    s, prior = problem.structure, problem.prior
    doc: dict = {"mode": args.mode, "model": s.model.value, "sharing": s.sharing.value}
    if args.mode == "saturated":
        if s.sharing is SharingMode.COMMON_LOCATION_SCALE and s.M != 2:
            raise _NumericFailure("saturated case selection needs exactly two groups")
        sol = saturated_design(s, group_marginals(s, prior), prior)
        xi = sol.design
        phi = bayes_logdet(s, xi, prior)
        doc["case"] = sol.case.value if sol.case is not None else None
        doc["interior_points"] = [_g(x) for x in sol.interior_points]
        if sol.auxiliary_points:
            doc["auxiliary_points"] = [_g(x) for x in sol.auxiliary_points]
        if sol.u is not None:
            doc["u"] = _g(sol.u)
        doc["residuals"] = {k: [float(f"{v:.3e}") for v in np.atleast_1d(val)]
                            for k, val in sol.diagnostics.items()}
    else:
        cfg = problem.pso_config(args.seed)
        res = optimize(s, prior, cfg)
        xi, phi = res.design, res.value
        doc["case"] = None
        doc["seed"] = cfg.seed
        doc["evaluations"] = res.evaluations
    if not math.isfinite(phi):
        raise _NumericFailure("solution is singular at some prior atom")
    doc["phi"] = float(phi)
    doc["report"] = design_to_dict(xi, REPORT_DIGITS)
    doc["design"] = design_to_dict(xi)

    print(_design_table(xi))
    if doc["case"]:
        print(f"case {doc['case']}")
    print(f"Phi = {phi:.10g}")
    if args.out:
        _write(Path(args.out), dump(doc))
    return EXIT_OK


def _tau_csv(curve) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dose", "tau"])
    for d, t in zip(curve.doses, curve.tau):
        w.writerow([f"{d:.10g}", f"{t:.10g}"])
    return buf.getvalue()


def _run_check(args, write_report: bool) -> int:
    problem = load_problem(args.problem)
    xi = load_design(args.design)
    _compatible(problem, xi, args.design)
    grid = args.grid if args.grid is not None else problem.grid
    tol = args.tol if args.tol is not None else problem.tolerance
    rep = check_equivalence(problem.structure, xi, problem.prior, grid, tol)
    out = Path(args.out)
    for c in rep.curves:
        _write(out / f"tau_group{c.group}.csv", _tau_csv(c))
    if write_report:
        doc = {
            "verdict": rep.verdict,
            "tolerance": tol,
            "grid_points_per_group": grid,
            "max_violation": _g(rep.max_violation),
            "groups": [{
                "group": c.group,
                "max_tau": _g(c.max_tau),
                "at_dose": _g(c.max_dose),
                "violation_intervals": [[_g(a), _g(b)] for a, b in c.violation_intervals],
            } for c in rep.curves],
        }
        _write(out / "report.yaml", dump(doc))
        for c in rep.curves:
            line = f"group {c.group}: max tau = {c.max_tau:.4g} at d = {c.max_dose:.6g}"
            if c.violation_intervals:
                line += "; tau > tol on " + ", ".join(
                    f"[{a:.4g}, {b:.4g}]" for a, b in c.violation_intervals)
            print(line)
        print(rep.verdict)
    return EXIT_OK if rep.certified else EXIT_REFUTED


def cmd_check(args) -> int:
    return _run_check(args, write_report=True)


def cmd_tau_curve(args) -> int:
    return _run_check(args, write_report=False)


def _label(path: str, used: set) -> str:
    base = Path(path).stem
    label, n = base, 2
    while label in used:
        label, n = f"{base}_{n}", n + 1
    used.add(label)
    return label


def efficiency_rows(problem: Problem, designs: dict, seed: int | None = None) -> list[list[str]]:
    """CSV rows of percentage efficiencies, one block per design.

    With two groups the table has one row per θ2 of group 2 and one column
    per θ2 of group 1. Otherwise it lists every prior atom on its own row.
    """
    s = problem.structure
    cfg = problem.pso_config(seed)
    atoms = [np.asarray(a) for a, _ in problem.prior.atoms()]
    refs = {}
    for a in atoms:
        key = tuple(a)
        if key not in refs:
            refs[key] = locally_d_optimal(s, a, cfg)
    eff = {(lab, tuple(a)): 100.0 * d_efficiency(s, xi, a, refs[tuple(a)])
           for lab, xi in designs.items() for a in atoms}
    nl = s.nonlinear_indices()
    keys = {(a[nl[0]], a[nl[1]]) for a in atoms} if s.M == 2 else set()
    wide = s.M == 2 and len(keys) == len({tuple(a) for a in atoms})
    rows = []
    if wide:
        by_pair = {(a[nl[0]], a[nl[1]]): tuple(a) for a in atoms}
        cols = sorted({k[0] for k in keys})
        rws = sorted({k[1] for k in keys})
        rows.append(["design", "theta2_2"] + [f"{c:g}" for c in cols])
        for lab in designs:
            for r in rws:
                cells = []
                for c in cols:
                    atom = by_pair.get((c, r))
                    cells.append("" if atom is None else f"{eff[(lab, atom)]:.2f}")
                rows.append([lab, f"{r:g}"] + cells)
    else:
        rows.append(["design"] + [f"theta_{j + 1}" for j in range(s.m)] + ["efficiency"])
        for lab in designs:
            for a in atoms:
                rows.append([lab] + [f"{v:g}" for v in a] + [f"{eff[(lab, tuple(a))]:.2f}"])
    return rows


def cmd_efficiency(args) -> int:
    problem = load_problem(args.problem)
    designs, used = {}, set()
    for path in args.designs:
        xi = load_design(path)
        _compatible(problem, xi, path)
        designs[_label(path, used)] = xi
    rows = efficiency_rows(problem, designs, args.seed)
    buf = _stdio.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    if args.out:
        _write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doseopt", description=(
        "Bayesian D-optimal designs for Emax, exponential and linear-in-log "
        "dose-response models."))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="compute a design")
    sp.add_argument("problem")
    sp.add_argument("--mode", choices=("saturated", "pso"), default="saturated")
    sp.add_argument("--seed", type=int, default=None, help="PSO seed (overrides the pso block)")
    sp.add_argument("--out", help="result file (YAML)")
    sp.set_defaults(func=cmd_solve)

    for name, func, helptext in (
            ("check", cmd_check, "equivalence check with report and tau CSVs"),
            ("tau-curve", cmd_tau_curve, "write tau CSVs only")):
        cp = sub.add_parser(name, help=helptext)
        cp.add_argument("problem")
        cp.add_argument("design")
        cp.add_argument("--grid", type=int, default=None, help="grid points per group")
        cp.add_argument("--tol", type=float, default=None, help="tau tolerance")
        cp.add_argument("--out", default=".", help="output directory")
        cp.set_defaults(func=func)

    ep = sub.add_parser("efficiency", help="D-efficiency table against local optima")
    ep.add_argument("problem")
    ep.add_argument("designs", nargs="+")
    ep.add_argument("--seed", type=int, default=None)
    ep.add_argument("--out", help="CSV file (default: stdout)")
    ep.set_defaults(func=cmd_efficiency)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    if getattr(args, "grid", None) is not None and args.grid < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (_NumericFailure, *_NUMERIC_ERRORS) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
