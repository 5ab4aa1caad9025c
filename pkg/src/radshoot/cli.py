"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 numerical failure (no bracket, undetermined classification, underflow).
Every file written carries a ``#`` header with the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .functionals import (DomainError, H_of, dirichlet_P_of_r, extract_branches, trace_P, trace_Pbar,
                          trace_Q, trace_S12, trace_W, trace_Wtilde, FunctionalTrace)
from .io import header_lines, write_rows
from .nonlinearity import HYPOTHESES, FamilyError, check_hypotheses, parse_family
from .radial_ode import IntegrationError, ProblemConfig, integrate
from .shooting import (ShootingError, classify, find_bound_state, scan, scan_to_csv,
                       solve_dirichlet, switch_points)
from .verify import (ComparisonError, check_dirichlet, default_plan, pair_study, report_json,
                     run_suite)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

FUNCTIONALS = ("I", "W", "Wtilde", "Q", "H", "P", "Pbar", "S12", "S12bar", "dirichletP")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _pair(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected lo,hi")
    return tuple(parts)


def _grid(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected lo,hi,count")
    return float(parts[0]), float(parts[1]), int(parts[2])


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("problem")
    g.add_argument("--config", metavar="PATH", help="key=value file; flags override it")
    g.add_argument("--family", help="troy | power_diff:p=<p>,q=<q> | pure_power:q=<q>")
    g.add_argument("--n", type=float, help="dimension (real, >= 2)")
    g.add_argument("--rmax", type=_positive, default=100.0, help="integration horizon")
    g.add_argument("--rtol", type=_positive, default=1e-10)
    g.add_argument("--atol", type=_positive, default=1e-12)
    g.add_argument("--event-tol", type=_positive, default=1e-11)
    o = p.add_argument_group("output")
    o.add_argument("--out", metavar="DIR", help="directory for output files")
    o.add_argument("--format", choices=("delimited", "json"), default="delimited")
    o.add_argument("--jobs", type=int, default=1, help="worker processes (scan, verify)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radshoot",
                                     description="Shooting and invariant checks for radial "
                                                 "solutions of u'' + (n-1)/r u' + f(u) = 0.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("check-hypotheses", help="grid check of the structural hypotheses on f")
    _common(p)
    p.add_argument("--smax", type=_positive, default=10.0)
    p.add_argument("--grid-count", type=int, default=2000)
    p.add_argument("--require", help="comma list of hypotheses gating the exit code")

    p = sub.add_parser("trace", help="integrate one shot and export the trajectory")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--no-phi", action="store_true", help="skip the variational equation")

    p = sub.add_parser("classify", help="classify one amplitude")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int, default=1, help="highest level to resolve")

    p = sub.add_parser("scan", help="classify an amplitude grid")
    _common(p)
    p.add_argument("--grid", type=_grid, help="lo,hi,count")
    p.add_argument("--k", type=int, default=1)

    p = sub.add_parser("solve", help="bracket the k-th bound state")
    _common(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--bracket", type=_pair)
    p.add_argument("--width-tol", type=_positive, default=1e-12)

    p = sub.add_parser("dirichlet", help="Dirichlet problem in the ball of radius rho")
    _common(p)
    p.add_argument("--rho", type=_positive)
    p.add_argument("--k", type=int, default=0, help="number of interior zeros")
    p.add_argument("--bracket", type=_pair)

    p = sub.add_parser("functional", help="export a functional trace along a branch")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha2", type=float, help="second shot for S12 / S12bar")
    p.add_argument("--functional", choices=FUNCTIONALS, default="Q")
    p.add_argument("--branch", type=int, default=1, help="1-based branch index")
    p.add_argument("--s-range", type=_pair, help="lo,hi clipped to the domain")
    p.add_argument("--count", type=int, default=201)

    p = sub.add_parser("compare", help="orderings for the pair alpha* -+ delta")
    _common(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, help="alpha* (located from --bracket when absent)")
    p.add_argument("--bracket", type=_pair)
    p.add_argument("--delta", type=_positive, default=1e-3)
    p.add_argument("--width-tol", type=_positive, default=1e-12)

    p = sub.add_parser("verify", help="run the check suite for a family")
    _common(p)
    p.add_argument("--k", type=int, default=2, help="highest bound state in the default plan")
    p.add_argument("--plan", metavar="PATH", help="JSON list of plan steps")
    return parser


def _read_config(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    if args.config:
        cfg = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _resolved(args) -> dict:
    skip = {"config", "out", "jobs"}  # none of these change the numbers
    out = {"radshoot": __version__}
    for k, v in sorted(vars(args).items()):
        if k in skip or v is None:
            continue
        out[k] = ",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in v) \
            if isinstance(v, tuple) else v
    return out


def _problem(args):
    nl = parse_family(args.family)
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    cfg = ProblemConfig(n=args.n, alpha=1.0, r_max=args.rmax, rtol=args.rtol, atol=args.atol,
                        event_tol=args.event_tol)
    return nl, cfg


def _outdir(args) -> Path | None:
    if not args.out:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_text(path: Path, header: dict, lines) -> None:
    with open(path, "w") as fh:
        for h in header_lines(header):
            fh.write(h + "\n")
        for line in lines:
            fh.write(line + "\n")


def _write_json(path: Path, header: dict, payload) -> None:
    with open(path, "w") as fh:
        json.dump({"config": header, **payload}, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


def _emit_report(args, stem: str, lines: list[str], payload: dict) -> None:
    out = _outdir(args)
    if out is None:
        return
    hdr = _resolved(args)
    if args.format == "json":
        _write_json(out / f"{stem}.json", hdr, payload)
    else:
        _write_text(out / f"{stem}.txt", hdr, lines)


def _emit_table(args, stem: str, columns, rows) -> Path | None:
    out = _outdir(args)
    if out is None:
        return None
    hdr = _resolved(args)
    if args.format == "json":
        path = out / f"{stem}.json"
        _write_json(path, hdr, {"columns": list(columns), "rows": [list(r) for r in rows]})
        return path
    return write_rows(out / f"{stem}.csv", columns, rows, hdr)


def _f(x) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_hypotheses(args) -> int:
    _need(args, "family", "n")
    nl = parse_family(args.family)
    rep = check_hypotheses(nl, args.n, s_max=args.smax, grid_count=args.grid_count)
    if args.require:
        gate = [h.strip() for h in args.require.split(",") if h.strip()]
        bad = [h for h in gate if h not in HYPOTHESES]
        if bad:
            raise UsageError(f"unknown hypotheses: {', '.join(bad)}")
    elif nl.b > 0:
        gate = ["f1", "f2", "f3", "f4", "f4p", "f5", "f6"]
    else:
        gate = ["f1p", "f2p", "f3p", "f3p_strict"]
    lines = rep.lines()
    failed = [h for h in gate if rep[h].status == "fail"]
    lines.append(f"# gate={','.join(gate)} failed={','.join(failed) or 'none'}")
    print("\n".join(lines))
    payload = {"verdicts": {h: {"status": v.status, "margin": v.margin, "at": v.at, "note": v.note}
                            for h, v in rep.verdicts.items()}, "gate": gate, "failed": failed}
    _emit_report(args, "hypotheses", lines, payload)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_trace(args) -> int:
    _need(args, "family", "n", "alpha")
    nl, cfg = _problem(args)
    traj = integrate(nl, replace(cfg, alpha=args.alpha, with_phi=not args.no_phi))
    print(f"nodes={len(traj.r)} r_end={_f(traj.r_end)} termination={traj.termination} "
          f"events={len(traj.events)}")
    for e in traj.events:
        print(f"  {e.kind:8s} r={_f(e.r)} u={_f(e.u)} du={_f(e.du)}")
    rows = np.column_stack([traj.r, traj.y, traj.I]).tolist()
    _emit_table(args, "trajectory", ["r", "u", "du", "phi", "dphi", "I"], rows)
    _emit_table(args, "events", ["kind", "r", "u", "du", "phi", "dphi"],
                [[e.kind, e.r, *e.state] for e in traj.events])
    return EXIT_NUMERIC if traj.termination == "step-underflow" else EXIT_OK


def _classification_lines(c) -> list[str]:
    return [f"alpha={_f(c.alpha)} outcome={c.outcome} level={c.level} label={c.label}",
            "zeros=" + ",".join(_f(z) for z in c.zeros),
            "slopes=" + ",".join(_f(z) for z in c.slopes),
            "extrema_r=" + ",".join(_f(z) for z in c.extrema_r),
            "extrema_u=" + ",".join(_f(z) for z in c.extrema_u),
            f"I_stop={_f(c.I_stop)} termination={c.termination}" + (f" note={c.note}" if c.note else "")]


def cmd_classify(args) -> int:
    _need(args, "family", "n", "alpha")
    nl, cfg = _problem(args)
    c = classify(nl, args.n, args.alpha, replace(cfg, with_phi=False), args.k)
    lines = _classification_lines(c)
    print("\n".join(lines))
    _emit_report(args, "classification", lines,
                 {"alpha": c.alpha, "outcome": c.outcome, "level": c.level, "zeros": c.zeros,
                  "slopes": c.slopes, "extrema_r": c.extrema_r, "extrema_u": c.extrema_u,
                  "I_stop": c.I_stop, "termination": c.termination, "note": c.note})
    return EXIT_NUMERIC if c.outcome == "undetermined" else EXIT_OK


def cmd_scan(args) -> int:
    _need(args, "family", "n", "grid")
    nl, cfg = _problem(args)
    lo, hi, count = args.grid
    if count < 2 or not hi > lo:
        raise UsageError("--grid needs lo < hi and count >= 2")
    grid = np.linspace(lo, hi, count)
    res = scan(nl, args.n, grid, replace(cfg, with_phi=False), args.k, jobs=args.jobs)
    for k in range(1, args.k + 1):
        sw = switch_points(res, k)
        where = ", ".join(f"({_f(res[i - 1].alpha)}, {_f(res[i].alpha)})" for i in sw)
        print(f"reach-{k} switches={len(sw)} {where}")
    undetermined = sum(c.outcome == "undetermined" for c in res)
    print(f"points={len(res)} undetermined={undetermined}")
    out = _outdir(args)
    if out is not None:
        if args.format == "json":
            _write_json(out / "scan.json", _resolved(args),
                        {"rows": [{"alpha": c.alpha, "outcome": c.outcome, "level": c.level,
                                   "zeros": c.zeros, "extrema_r": c.extrema_r[1:],
                                   "extrema_u": c.extrema_u[1:]} for c in res]})
        else:
            scan_to_csv(res, out / "scan.csv", args.k, _resolved(args))
    return EXIT_OK


def _bound_state(args, nl, cfg):
    bracket = args.bracket or (nl.beta * (1 + 1e-9) + 1e-12, 50.0)
    return find_bound_state(nl, args.n, args.k, bracket, replace(cfg, with_phi=True), args.width_tol)


def cmd_solve(args) -> int:
    _need(args, "family", "n")
    nl, cfg = _problem(args)
    bs = _bound_state(args, nl, cfg)
    rep = bs.report()
    lines = [f"{k}={_f(v) if isinstance(v, float) else v}" for k, v in rep.items()]
    print("\n".join(lines))
    _emit_report(args, "bound_state", lines, rep)
    if bs.trajectory is not None:
        t = bs.trajectory
        _emit_table(args, "bound_state_trajectory", ["r", "u", "du", "phi", "dphi", "I"],
                    np.column_stack([t.r, t.y, t.I]).tolist())
    return EXIT_OK


def cmd_dirichlet(args) -> int:
    _need(args, "family", "n", "rho")
    nl, cfg = _problem(args)
    sol = solve_dirichlet(nl, args.n, args.rho, args.k, replace(cfg, with_phi=True), args.bracket)
    chk = check_dirichlet(sol)
    lines = [f"rho={_f(sol.rho)}", f"k={sol.k}", f"alpha={_f(sol.alpha)}",
             "zeros=" + ",".join(_f(z) for z in sol.zeros),
             f"boundary_residual={_f(sol.boundary_residual)}",
             f"bracket={_f(sol.bracket[0])},{_f(sol.bracket[1])}",
             f"degenerate={sol.degenerate}", chk.line()]
    print("\n".join(lines))
    _emit_report(args, "dirichlet", lines,
                 {"rho": sol.rho, "k": sol.k, "alpha": sol.alpha, "zeros": sol.zeros,
                  "boundary_residual": sol.boundary_residual, "bracket": sol.bracket,
                  "degenerate": sol.degenerate, "check": chk.to_dict()})
    return EXIT_FAIL if chk.failed else EXIT_OK


def cmd_functional(args) -> int:
    _need(args, "family", "n", "alpha")
    nl, cfg = _problem(args)
    tag = args.functional
    traj = integrate(nl, replace(cfg, alpha=args.alpha, with_phi=False))
    if tag == "dirichletP":
        rr = np.linspace(traj.r_start, traj.r_end, args.count)
        zs = np.array([e.r for e in traj.events_of("u-zero")])
        if zs.size:
            rr = rr[np.min(np.abs(rr[:, None] - zs[None, :]), axis=1) >= 1e-6 * np.maximum(1, rr)]
        tr = dirichlet_P_of_r(traj, rr)
    else:
        brs = {b.index: b for b in extract_branches(traj)}
        if args.branch not in brs:
            raise UsageError(f"branch {args.branch} not present (have {sorted(brs)})")
        br = brs[args.branch]
        lo, hi = args.s_range or (br.s_lo, br.s_hi)
        if tag in ("Q", "H", "P", "Pbar"):
            # trace only the |s| >= beta part that falls in the requested range
            a, b = max(lo, br.s_lo), min(hi, br.s_hi)
            if a >= nl.beta or b <= -nl.beta:
                pass
            elif b > nl.beta:
                a = nl.beta
            else:
                b = -nl.beta
            lo, hi = a, b
        s = br.grid(lo, hi, args.count)
        if nl.b > 0 and tag in ("Q", "H", "P", "Pbar"):
            s = s[np.abs(np.abs(s) - nl.b) >= 1e-6 * nl.beta]
        if s.size == 0:
            raise UsageError("empty s-range on this branch")
        if tag == "W":
            tr = trace_W(br, s)
        elif tag == "Wtilde":
            tr = trace_Wtilde(br, s)
        elif tag == "Q":
            tr = trace_Q(br, s)
        elif tag == "P":
            tr = trace_P(br, s)
        elif tag == "Pbar":
            tr = trace_Pbar(br, s)
        elif tag == "H":
            r, du = br.invert(s)
            tr = FunctionalTrace("H", s, r, du, np.asarray(H_of(nl, args.n, s)))
        elif tag == "I":
            r, du = br.invert(s)
            tr = FunctionalTrace("I", s, r, du, du ** 2 + 2 * np.array([nl.F(x) for x in s]))
        else:  # S12, S12bar
            _need(args, "alpha2")
            t2 = integrate(nl, replace(cfg, alpha=args.alpha2, with_phi=False))
            b2 = {b.index: b for b in extract_branches(t2)}.get(args.branch)
            if b2 is None:
                raise UsageError(f"branch {args.branch} missing on the second shot")
            s = s[(s >= b2.s_lo) & (s <= b2.s_hi)]
            tr = trace_S12(br, b2, s)
    print(f"functional={tr.tag} points={len(tr.values)} "
          f"min={_f(float(np.min(tr.values)))} max={_f(float(np.max(tr.values)))}")
    if tag == "dirichletP":
        _emit_table(args, f"functional_{tag}", ["r", "value"], zip(tr.r, tr.values))
    else:
        _emit_table(args, f"functional_{tag}", ["s", "r", "du", "value"],
                    zip(tr.s, tr.r, tr.du, tr.values))
    return EXIT_OK


def cmd_compare(args) -> int:
    _need(args, "family", "n")
    nl, cfg = _problem(args)
    alpha = args.alpha
    if alpha is None:
        alpha = _bound_state(args, nl, cfg).alpha_star
    deltas = [args.delta * 10.0 ** -i for i in range(3)]
    rep = pair_study(nl, args.n, alpha, args.k, deltas, replace(cfg, with_phi=False))
    lines = [f"alpha_star={_f(alpha)}", f"delta={_f(rep.delta)}", f"verdict={rep.verdict()}"]
    lines += rep.lines()
    print("\n".join(lines))
    _emit_report(args, "compare", lines, {"alpha_star": alpha, **rep.to_dict()})
    return EXIT_OK


def cmd_verify(args) -> int:
    _need(args, "family", "n")
    nl, cfg = _problem(args)
    if args.plan:
        try:
            plan = json.loads(Path(args.plan).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read plan: {exc}") from exc
    else:
        plan = default_plan(nl, args.n, args.k)
    results = run_suite(nl, args.n, plan, cfg, jobs=args.jobs)
    for r in results:
        print(r.line())
    failed = sum(r.failed for r in results)
    print(f"checks={len(results)} failed={failed}")
    out = _outdir(args)
    if out is not None:
        if args.format == "json":
            report_json(results, out / "verify.json", _resolved(args))
        else:
            _write_text(out / "verify.txt", _resolved(args), [r.line() for r in results])
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "check-hypotheses": cmd_check_hypotheses,
    "trace": cmd_trace,
    "classify": cmd_classify,
    "scan": cmd_scan,
    "solve": cmd_solve,
    "dirichlet": cmd_dirichlet,
    "functional": cmd_functional,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"radshoot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FamilyError) as exc:
        print(f"radshoot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShootingError, IntegrationError, ComparisonError, DomainError, ArithmeticError) as exc:
        print(f"radshoot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"radshoot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
