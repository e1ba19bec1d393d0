"""Command-line entry points: ``run``, ``sweep`` and ``check``.

Exit codes: 0 converged (or valid, for ``check``), 1 input error,
2 diverged, 3 iteration budget exceeded.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, export, fem, plotting
from . import mesh as meshmod
from .laws import LawError, derive_constants
from .scenario import AXES, ScenarioError, parse_scenario, with_axis_value
from .scheme import (BudgetExceededError, DivergenceError, Discretization, InnerFailure, SchemeError,
                     check_smallness, fit_contraction, run_coupled)

log = logging.getLogger("antiplane")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_BUDGET = 0, 1, 2, 3
INPUT_ERRORS = (ScenarioError, meshmod.MeshError, LawError, fem.AssemblyError, fem.NonSPDError, ValueError,
                OSError)


@dataclass
class RunResult:
    exit_code: int
    status: str
    message: str = ""
    output_dir: Path | None = None
    artifacts: list = field(default_factory=list)
    summary: list = field(default_factory=list)  # (key, value) rows of summary.csv
    solution: object = None


# ---------------------------------------------------------------- run


def _trace_constant(disc):
    if not len(disc.cdofs):
        return math.nan
    return fem.estimate_trace_constant(disc.space.mesh, space=disc.space)


def _safe_fit(report):
    try:
        return fit_contraction(report)
    except ValueError:
        return math.nan, math.nan


def manufactured_ladder(scn, c0_hat, first=None):
    """Errors of the final-time displacement on scn.levels uniform refinements."""
    rows = []
    m = scn.mesh
    for level in range(scn.levels):
        if level:
            m = meshmod.refine_uniform(m)
        if level == 0 and first is not None:
            sol = first
        else:
            sol = run_coupled(scn.problem(m), scn.config(u0=np.zeros(m.n_vertices)), c0_hat=c0_hat)
        e0, e1 = fem.error_norms(m, sol.u[-1], scn.exact_u)
        rows.append([level, m.h_max(), m.n_vertices, e0, e1])
    for k, row in enumerate(rows):
        if k == 0:
            row += [None, None]
        else:
            prev = rows[k - 1]
            ratio_h = math.log(prev[1] / row[1])
            row += [math.log(prev[3] / row[3]) / ratio_h, math.log(prev[4] / row[4]) / ratio_h]
    return rows


def _write_outputs(scn, out, disc, sol, figures):
    files = []
    grid = sol.grid
    for k in range(len(grid)):
        files.append(export.write_field_csv(out / "fields" / f"u_{k:04d}.csv", scn.mesh, sol.u[k]))
        if scn.vtk:
            files.append(export.write_vtk(out / "fields" / f"u_{k:04d}.vtk", scn.mesh, {"u": sol.u[k]},
                                          title=f"u at t = {grid.nodes[k]!r}"))
    files.append(export.write_beta_csv(out / "beta.csv", grid, disc.dofs.contact_vertices, sol.beta))
    files.append(export.write_convergence_csv(out / "convergence.csv", sol.report))
    if figures:
        figs = out / "figures"
        files.append(plotting.convergence_history(sol.report, figs / "convergence.png"))
        files.append(plotting.beta_trajectories(grid, scn.mesh, disc.dofs.contact_vertices, sol.beta,
                                                figs / "beta.png"))
        files.append(plotting.displacement(scn.mesh, sol.u[-1], figs / "u_final.png",
                                           title=f"u at t = {grid.T:g}"))
    return files


def run_command(scn, out_dir=None, figures=None):
    """Full pipeline for one scenario; never raises for solver outcomes."""
    out = Path(out_dir) if out_dir is not None else scn.output_dir
    figures = scn.figures if figures is None else figures
    out.mkdir(parents=True, exist_ok=True)
    summary = [("scenario", scn.path.name if scn.path else "")]
    artifacts = []
    try:
        meshmod.validate_partition(scn.mesh, scn.partition_mode)
        problem = scn.problem()
        config = scn.config()
        disc = Discretization(problem, config.grid, config.verification)
        c0_hat = _trace_constant(disc)
        consts = derive_constants(disc.fric, disc.adh)
        small = check_smallness(disc.mu_star, consts, disc.beta0, c0_hat) if math.isfinite(c0_hat) else None
    except INPUT_ERRORS as exc:
        return _finish(out, RunResult(EXIT_INPUT, "input_error", str(exc), out), summary, figures)

    summary += [("n_vertices", scn.mesh.n_vertices), ("n_triangles", scn.mesh.n_triangles),
                ("n_contact", disc.dofs.n_contact), ("T", scn.grid.T), ("n_steps", scn.grid.n_steps),
                ("law", scn.adh.law), ("mu_star", disc.mu_star), ("c0_hat", c0_hat),
                ("delta_hat", small.delta_hat if small else math.nan),
                ("smallness_passed", small.passed if small else None)]
    for note in scn.notes:
        summary.append(("assumption_waived", note))

    sol, result, partial = None, None, None
    try:
        sol = run_coupled(problem, config, c0_hat=c0_hat if math.isfinite(c0_hat) else None, disc=disc)
        result = RunResult(EXIT_OK, "converged")
    except DivergenceError as exc:
        sol, result = exc.solution, RunResult(EXIT_DIVERGED, "diverged", str(exc))
    except BudgetExceededError as exc:
        sol, result = exc.solution, RunResult(EXIT_BUDGET, "budget_exceeded", str(exc))
    except InnerFailure as exc:
        result = RunResult(EXIT_BUDGET, "inner_failure", str(exc))
        partial = exc.report
    except SchemeError as exc:
        result = RunResult(EXIT_DIVERGED, "diverged", str(exc))
        partial = exc.report
    except INPUT_ERRORS as exc:
        result = RunResult(EXIT_INPUT, "input_error", str(exc))
    result.output_dir = out

    if sol is None and partial is not None:
        # failure inside an outer iteration: only the history so far is meaningful
        summary += [("iterations", partial.iterations), ("termination", result.status)]
        artifacts.append(export.write_convergence_csv(out / "convergence.csv", partial))

    if sol is not None:
        rep = sol.report
        B, c = _safe_fit(rep)
        summary += [("iterations", rep.iterations), ("termination", rep.termination), ("B_fit", B), ("c_fit", c),
                    ("max_ratio", max(rep.recorded_ratios) if rep.recorded_ratios else math.nan),
                    ("tol_outer", rep.tol_outer), ("T_safe", rep.T_safe), ("posthoc_residual", rep.posthoc_residual)]
        for w in rep.warnings:
            summary.append(("warning", w))
        artifacts += _write_outputs(scn, out, disc, sol, figures)
        if result.exit_code == EXIT_OK:
            try:
                br = bounds.evaluate(sol, disc, consts, c0_hat if math.isfinite(c0_hat) else 0.0)
                summary += [(f"bounds.{k}", v) for k, v in br.rows()]
            except ValueError as exc:
                summary.append(("bounds.error", str(exc)))
            if scn.exact_u is not None:
                rows = manufactured_ladder(scn, c0_hat if math.isfinite(c0_hat) else None, first=sol)
                artifacts.append(export.write_table(
                    out / "rates.csv", ["level", "h", "n_vertices", "L2_error", "H1_semi_error", "L2_rate", "H1_rate"],
                    rows))
                summary += [("rate.L2", rows[-1][5]), ("rate.H1_semi", rows[-1][6])]
                if figures:
                    artifacts.append(plotting.convergence_rates([r[1] for r in rows], [r[3] for r in rows],
                                                                [r[4] for r in rows], out / "figures" / "rates.png"))
    result.solution = sol
    result.artifacts = artifacts
    return _finish(out, result, summary, figures)


def _finish(out, result, summary, figures):
    summary = [("status", result.status), ("exit_code", result.exit_code), ("message", result.message)] + summary
    result.artifacts.append(export.write_summary_csv(out / "summary.csv", summary))
    names = sorted(str(Path(p).relative_to(out)) for p in result.artifacts) + ["summary.txt"]
    lines = [f"status: {result.status} (exit {result.exit_code})"]
    if result.message:
        lines.append(f"message: {result.message}")
    width = max(len(str(k)) for k, _ in summary)
    lines += [f"{k:<{width}}  {export.fmt(v)}" for k, v in summary[3:]]
    lines.append("artifacts:")
    lines += [f"  {n}" for n in names]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    result.artifacts.append(out / "summary.txt")
    result.summary = summary
    return result


# ---------------------------------------------------------------- check


def check_command(scn):
    """Validation and smallness only; returns (exit_code, text)."""
    meshmod.validate_partition(scn.mesh, scn.partition_mode)
    problem = scn.problem()
    disc = Discretization(problem, scn.grid, scn.flags["verification"])
    c0_hat = _trace_constant(disc)
    consts = derive_constants(disc.fric, disc.adh)
    lines = [f"mesh: {scn.mesh.n_vertices} vertices, {scn.mesh.n_triangles} triangles, "
             f"{disc.dofs.n_contact} contact vertices"]
    if math.isfinite(c0_hat):
        s = check_smallness(disc.mu_star, consts, disc.beta0, c0_hat)
        lines += [f"c0_hat = {c0_hat:.6g}", f"mu_star = {s.mu_star:.6g}",
                  f"delta_hat = {s.delta_hat:.6g} ({'passes' if s.passed else 'fails'}: contraction "
                  f"{'expected' if s.passed else 'not guaranteed'})"]
    else:
        lines.append("no free contact dofs: smallness not applicable")
    lines += [f"note: {n}" for n in scn.notes]
    return EXIT_OK, "\n".join(lines)


# ---------------------------------------------------------------- sweep


def parse_axis(spec):
    """``name=v1,v2,...`` or ``name=a:b:n`` (n evenly spaced values)."""
    if "=" not in spec:
        raise ValueError(f"axis {spec!r}: expected name=values")
    name, values = (s.strip() for s in spec.split("=", 1))
    if name not in AXES:
        raise ValueError(f"unknown sweep axis {name!r} (expected one of {', '.join(AXES)})")
    if not values:
        raise ValueError(f"axis {name!r} is empty")
    try:
        if ":" in values:
            a, b, n = values.split(":")
            n = int(n)
            if n < 1:
                raise ValueError(f"axis {name!r} is empty")
            pts = [float(v) for v in np.linspace(float(a), float(b), n)]
        else:
            pts = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        if "empty" in str(exc):
            raise
        raise ValueError(f"axis {name!r}: cannot parse {values!r}") from None
    if not pts:
        raise ValueError(f"axis {name!r} is empty")
    return name, pts


def _sweep_point(args):
    scn, params, out = args
    try:
        point = scn
        for name, value in params:
            point = with_axis_value(point, name, value)
    except INPUT_ERRORS as exc:
        out.mkdir(parents=True, exist_ok=True)
        res = _finish(out, RunResult(EXIT_INPUT, "input_error", str(exc), out), [], False)
    else:
        res = run_command(point, out)
    s = dict(res.summary)
    return {
        "delta_hat": float(s.get("delta_hat", math.nan)),
        "converged": res.exit_code == EXIT_OK,
        "status": res.status,
        "exit_code": res.exit_code,
        "B_fit": float(s.get("B_fit", math.nan)),
        "iterations": int(s.get("iterations", 0)),
    }


def sweep_command(scn, axes, out_dir=None, jobs=1, figures=None):
    """One run per grid point of one or two axes; writes sweep.csv and returns its rows."""
    if not axes:
        raise ValueError("a sweep needs at least one axis")
    if len(axes) > 2:
        raise ValueError("at most two sweep axes are supported")
    names = [a[0] for a in axes]
    if len(set(names)) != len(names):
        raise ValueError("sweep axes must be distinct")
    for name, pts in axes:
        if not pts:
            raise ValueError(f"axis {name!r} is empty")
    root = Path(out_dir) if out_dir is not None else scn.output_dir / "sweep"
    root.mkdir(parents=True, exist_ok=True)
    if figures is not None:
        scn.figures = figures
    grid = list(itertools.product(*[pts for _, pts in axes]))
    tasks = [(scn, list(zip(names, point)), root / f"run_{i:03d}") for i, point in enumerate(grid)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = []
    for i, (point, res) in enumerate(zip(grid, results)):
        rows.append({"run": f"run_{i:03d}", **dict(zip(names, point)), **res})
    header = ["run"] + names + ["delta_hat", "converged", "status", "exit_code", "B_fit", "iterations"]
    export.write_table(root / "sweep.csv", header, ([r[h] for h in header] for r in rows))
    if scn.figures:
        plotting.sweep_map(rows, root / "sweep.png")
    return rows


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="antiplane", description="Quasistatic antiplane contact with adhesion.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="solve one scenario and write the report")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("--no-figures", action="store_true")
    s = sub.add_parser("sweep", help="run a scenario over a one- or two-parameter grid")
    s.add_argument("scenario")
    s.add_argument("--axis", action="append", default=[], metavar="NAME=VALUES",
                   help=f"axis over one of {', '.join(AXES)}; values as v1,v2,... or a:b:n")
    s.add_argument("--out", help="sweep directory (default <output.dir>/sweep)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--no-figures", action="store_true")
    c = sub.add_parser("check", help="validate a scenario and report the smallness condition")
    c.add_argument("scenario")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = parse_scenario(args.scenario)
        if args.verb == "check":
            code, text = check_command(scn)
            print(text)
            return code
        if args.verb == "run":
            res = run_command(scn, args.out, figures=False if args.no_figures else None)
            print((res.output_dir / "summary.txt").read_text(encoding="utf-8"), end="")
            if res.exit_code:
                print(f"error: {res.message}", file=sys.stderr)
            return res.exit_code
        axes = [parse_axis(a) for a in args.axis]
        rows = sweep_command(scn, axes, args.out, args.jobs, figures=False if args.no_figures else None)
        for r in rows:
            print(" ".join(f"{k}={export.fmt(v)}" for k, v in r.items()))
        return EXIT_OK
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
