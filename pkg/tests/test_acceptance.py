"""Acceptance criteria 1-12.

Each test logs one PASS/FAIL line (also repeated in the terminal summary)
before asserting, so a failing criterion still reports its numbers.
Frozen reference values come from independent computations noted inline.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.special import jn_zeros

from radshoot.cli import run
from radshoot.functionals import extract_branches
from radshoot.io import read_table
from radshoot.nonlinearity import check_hypotheses, find_beta, make_family, parse_family
from radshoot.radial_ode import ProblemConfig, integrate
from radshoot.shooting import solve_dirichlet
from radshoot.verify import (check_dirichlet, check_dirichlet_P, check_I_derivative,
                             check_I_monotone, check_P_monotone, check_Q_monotone, check_scaling,
                             pair_study, run_suite)

# troy, n = 3; scipy DOP853 shooting at rtol 1e-13
TROY_ALPHA = {1: 4.41033597779, 2: 9.2043001763, 3: 13.9325436211}
# power_diff(3,1), n = 2; scipy DOP853 shooting at rtol 1e-13
PD31_ALPHA = {1: 2.206200864650712, 2: 3.331989266584996, 3: 4.150094036246148}
# pure_power(0.5), n = 3, alpha = 1: first three zeros from DOP853 at rtol 1e-13
SQRT_Z = (2.75269805, 4.8144635, 6.64593234)


def _j0_first_zero():
    """Bisection on the power series of J0 (independent of the integrator)."""
    def j0(x):
        term, total, k = 1.0, 1.0, 0
        while abs(term) > 1e-18:
            k += 1
            term *= -(x * x / 4.0) / (k * k)
            total += term
        return total
    lo, hi = 2.0, 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if j0(lo) * j0(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# ---------------------------------------------------------------------------


def test_criterion_01_linear_calibration(record, linear):
    with Timer() as tm:
        traj = integrate(linear, ProblemConfig(n=3, alpha=1.0, r_max=20.5))
        rr = np.linspace(traj.r_start, 20.0, 20001)
        err_u = float(np.max(np.abs(traj(rr)[:, 0] - np.sin(rr) / rr)))
        zs = [e.r for e in traj.events_of("u-zero")][:3]
        err_z = max(abs(z - (i + 1) * math.pi) for i, z in enumerate(zs))
        t2 = integrate(linear, ProblemConfig(n=2, alpha=1.0, r_max=3.0))
        z2 = t2.events_of("u-zero")[0].r
    oracle = _j0_first_zero()
    assert oracle == pytest.approx(2.404825557695773, abs=1e-14)
    assert oracle == pytest.approx(jn_zeros(0, 1)[0], abs=1e-14)
    err_b = abs(z2 - oracle)
    ok = err_u <= 1e-8 and len(zs) == 3 and err_z <= 1e-8 and err_b <= 1e-8 and tm.seconds < 1
    record(1, ok, f"sup|u - sin r/r|={err_u:.2e} max|Z_i - i pi|={err_z:.2e} "
                  f"|Z1(n=2) - j0,1|={err_b:.2e}", tm.seconds)
    assert ok


def test_criterion_02_hypotheses(record):
    with Timer() as tm:
        troy3 = check_hypotheses(make_family("troy"), 3, s_max=10.0)
        troy4 = check_hypotheses(make_family("troy"), 4, s_max=10.0)
        pd = check_hypotheses(make_family("power_diff", {"p": 0.8, "q": 0.5}), 3, s_max=10.0)
    names = ("f1", "f2", "f3", "f4", "f4p", "f5", "f6")
    # (F/f)' - 1/2 = 1/(4(s-1)^2) is smallest at the grid end s = 10
    v = troy3["f4p"]
    closed = 1.0 / (4.0 * 81.0)
    ok = (troy3.holds(*names) and abs(v.margin - closed) < 1e-12 and v.at == pytest.approx(10.0)
          and troy4["f4p"].status == "fail" and pd["f4p"].status == "pass" and tm.seconds < 1)
    record(2, ok, f"troy n=3 {'/'.join(names)} pass; f4p margin={v.margin:.12g} "
                  f"(closed form {closed:.12g}); troy n=4 f4p {troy4['f4p'].status}; "
                  f"power_diff(0.8,0.5) n=3 f4p {pd['f4p'].status}", tm.seconds)
    assert ok


def test_criterion_03_landmarks(record):
    with Timer() as tm:
        b_troy = find_beta(make_family("troy"))
        b_pd = find_beta(make_family("power_diff", {"p": 3, "q": 1}))
    e1 = abs(b_troy - (1 + math.sqrt(2) / 2))
    e2 = abs(b_pd - math.sqrt(2))
    ok = e1 <= 1e-12 and e2 <= 1e-12 and tm.seconds < 0.1
    record(3, ok, f"|beta_troy - (1+sqrt2/2)|={e1:.1e} |beta_pd31 - sqrt2|={e2:.1e}", tm.seconds)
    assert ok


def test_criterion_04_energy(record):
    families = ["troy", "power_diff:p=3,q=1", "power_diff:p=0.8,q=0.5", "power_diff:p=2,q=1",
                "pure_power:q=0.5", "pure_power:q=1", "pure_power:q=0.3"]
    rng = np.random.default_rng(20261016)
    failures, worst_mono, worst_der = [], 0.0, 0.0
    with Timer() as tm:
        for i in range(50):
            nl = parse_family(families[i % len(families)])
            n = float(rng.choice([2.0, 2.5, 3.0, 4.0]))
            lo = 1.01 * nl.b if nl.b > 0 else 0.05
            alpha = float(rng.uniform(lo, 12.0))
            traj = integrate(nl, ProblemConfig(n=n, alpha=alpha, r_max=30.0, with_phi=False))
            mono, der = check_I_monotone(traj), check_I_derivative(traj)
            worst_mono = min(worst_mono, mono.margin)
            worst_der = max(worst_der, 1e-6 - der.margin)
            if mono.failed or der.failed:
                failures.append((nl.spec, n, alpha))
    ok = not failures and tm.seconds < 30
    record(4, ok, f"50 shots, failures={len(failures)} min I-slack={worst_mono:.2e} "
                  f"max rel dI error={worst_der:.2e}", tm.seconds)
    assert ok, failures


def _scan_and_solve(out):
    """Criterion 5 through the CLI; returns the bound-state reports and scan rows."""
    nl = make_family("troy")
    hi = TROY_ALPHA[3] + 1.0
    lo = nl.beta + (hi - nl.beta) / 1000.0  # 1000 points on (beta, alpha*_3 + 1]
    code = run(["scan", "--family", "troy", "--n", "3", "--grid", f"{lo!r},{hi!r},1000",
                "--k", "3", "--out", str(out)])
    assert code == 0
    cols, rows = read_table(out / "scan.csv")
    alphas = [float(r[0]) for r in rows]
    reports = {}
    for k in (1, 2, 3):
        zk = cols.index(f"Z{k}")
        reach = [r[zk] != "" for r in rows]
        flips = [i for i in range(1, len(reach)) if reach[i] != reach[i - 1]]
        sub = out / f"k{k}"
        if len(flips) == 1:
            i = flips[0]
            code = run(["solve", "--family", "troy", "--n", "3", "--k", str(k), "--bracket",
                        f"{alphas[i - 1]!r},{alphas[i]!r}", "--width-tol", "1e-12",
                        "--out", str(sub), "--format", "json"])
            assert code == 0
            reports[k] = (flips, json.loads((sub / "bound_state.json").read_text()))
        else:
            reports[k] = (flips, None)
    return reports, alphas


def test_criterion_05_bound_states_and_scan(record, tmp_path):
    with Timer() as tm:
        reports, alphas = _scan_and_solve(tmp_path / "run")
    step = alphas[1] - alphas[0]
    parts, ok = [], tm.seconds < 120
    prev = -math.inf
    for k, (flips, rep) in reports.items():
        if rep is None:
            ok = False
            parts.append(f"k={k}: {len(flips)} switches")
            continue
        a = rep["alpha_star"]
        good = (len(flips) == 1 and rep["width"] <= 1e-10 * a and rep["lo_label"] == f"P_{k}"
                and rep["hi_label"] == f"N_{k}" and a > prev
                and abs(a - TROY_ALPHA[k]) <= 1e-8 * TROY_ALPHA[k])
        ok &= good
        prev = a
        parts.append(f"k={k}: alpha*={a:.12g} width/alpha*={rep['width'] / a:.1e} switches=1")
    record(5, ok, f"grid step {step:.2e}; " + "; ".join(parts), tm.seconds)
    assert ok


@pytest.mark.parametrize("spec,n,table", [("troy", 3.0, TROY_ALPHA),
                                          ("power_diff:p=3,q=1", 2.0, PD31_ALPHA)])
def test_criterion_06_Q_monotone(record, spec, n, table):
    nl = parse_family(spec)
    results = []
    with Timer() as tm:
        plan = [{"check": "Q_monotone", "alpha": table[k] + d, "k": k}
                for k in (1, 2, 3) for d in (-1e-3, 1e-3)]
        results = run_suite(nl, n, plan)
    checked = [r for r in results if r.status != "skipped"]
    skipped = [r for r in results if r.status == "skipped"]
    ok = bool(checked) and all(r.status == "pass" for r in checked) and tm.seconds < 30
    ok &= all("no |s| >= beta part" in r.detail for r in skipped)
    worst = min(r.margin for r in checked) if checked else math.nan
    record(6, ok, f"{spec} n={n:g}: {len(checked)} decreasing branches checked, "
                  f"{len(skipped)} entirely inside (-beta, beta), min slack/scale={worst:.2e}",
           tm.seconds)
    assert ok


def test_criterion_07_P_monotone(record, troy):
    alphas = [TROY_ALPHA[k] + d for k in (1, 2, 3) for d in (-1e-3, 1e-3)] + [6.0, 12.0, 20.0]
    checked, slack, ok = 0, math.inf, True
    with Timer() as tm:
        for a in alphas:
            traj = integrate(troy, ProblemConfig(n=3, alpha=a, r_max=40.0, with_phi=False))
            first = extract_branches(traj)[0]
            if not first.s_lo < -troy.beta:  # (U1bar, -beta] is empty
                continue
            res = check_P_monotone(first)
            checked += 1
            slack = min(slack, res.margin)
            ok &= res.status == "pass"
    ok &= checked >= 6 and tm.seconds < 10
    record(7, ok, f"{checked} first-descent branches reaching below -beta, "
                  f"min P' slack/scale={slack:.2e}", tm.seconds)
    assert ok


def _compare(out, alpha_star):
    code = run(["compare", "--family", "troy", "--n", "3", "--k", "2", "--alpha",
                repr(alpha_star), "--delta", "1e-3", "--out", str(out), "--format", "json"])
    return code, json.loads((out / "compare.json").read_text())


def test_criterion_08_pair_chain(record, tmp_path):
    with Timer() as tm:
        code, doc = _compare(tmp_path / "cmp", TROY_ALPHA[2])
    ords = {o["name"]: o for o in doc["orderings"]}
    wanted = ["M1<M2 (T0)", "Q1(M1)>Q2(M2)", "m1>m2 (T1)", "Q1(m1)>Q2(m2)",
              "Z2(a1)>Z2(a2)", "|u1'(Z2)|<|u2'(Z2)|"]
    present = all(w in ords for w in wanted)
    strict = present and all(ords[w]["status"] == "holds" and ords[w]["margin"] > 1e-10
                             for w in wanted)
    windows = doc["intersections"]
    inter = len(windows) >= 2 and all(len(w["radii"]) >= 1 for w in windows)
    ok = code == 0 and strict and inter and tm.seconds < 30
    margins = " ".join(f"{w.split(' ')[0]}:{ords[w]['margin']:.1e}" for w in wanted if w in ords)
    record(8, ok, f"delta={doc['delta']:g} windows={len(windows)} intersections="
                  f"{[len(w['radii']) for w in windows]} margins {margins}", tm.seconds)
    assert ok


def test_criterion_09_W_separation(record, troy):
    with Timer() as tm:
        rep = pair_study(troy, 3, TROY_ALPHA[2], 2)
    ords = {o.name: o for o in rep.w_sep}
    wanted = ["r1(s)>r2(s)", "W1(s)<W2(s)", "Wtilde1(s)<Wtilde2(s)"]
    ok = all(w in ords and ords[w].status == "holds" for w in wanted) and tm.seconds < 10
    hi = min(troy.beta, rep.U_I) if rep.U_I is not None else math.nan
    record(9, ok, f"window [-beta, {hi:.6g}]; worst-point margins "
                  + " ".join(f"{w}:{ords[w].margin:.2e}" for w in wanted if w in ords),
           tm.seconds)
    assert ok


def test_criterion_10_phi_suite(record, troy):
    plan = []
    for d in (-1e-3, 1e-3):
        a = TROY_ALPHA[2] + d
        plan += [{"check": c, "alpha": a, "k": 2}
                 for c in ("phi", "variational_identity", "wronskian", "phi_fd")]
    with Timer() as tm:
        results = run_suite(troy, 3, plan)
    by = {}
    for r in results:
        by.setdefault(r.name, []).append(r)
    need = ["phi-positive", "phi-interlace", "variational-identity", "wronskian", "phi-fd"]
    ok = all(len(by.get(n_, [])) == 2 and all(r.status == "pass" for r in by[n_]) for n_ in need)
    ok &= not any(r.failed for r in results) and tm.seconds < 30
    record(10, ok, "; ".join(f"{n_} " + ",".join(r.status for r in by.get(n_, []))
                             for n_ in need), tm.seconds)
    assert ok


def test_criterion_11_dirichlet(record, sqrt_power):
    with Timer() as tm:
        scal = check_scaling(sqrt_power, 3, [0.5, 1.0, 2.0, 4.0])
        sols = [solve_dirichlet(sqrt_power, 3, 1.0, k) for k in (0, 1, 2)]
        checks = [check_dirichlet(s) for s in sols]
        pchecks = [check_dirichlet_P(s.trajectory) for s in sols]
    # alpha solving Z_{k+1}(alpha) = 1 is Z_{k+1}(1)^{-4} by the scaling law
    rel = [abs(s.alpha - SQRT_Z[s.k] ** -4) / SQRT_Z[s.k] ** -4 for s in sols]
    ok = (scal.status == "pass" and all(c.status == "pass" for c in checks)
          and all(p.status == "pass" for p in pchecks)
          and all(len(s.zeros) == s.k + 1 for s in sols) and max(rel) < 1e-7
          and tm.seconds < 60)
    record(11, ok, f"scaling spread margin={scal.margin:.1e}; alphas="
                   + ",".join(f"{s.alpha:.10g}" for s in sols)
                   + f" (max rel vs oracle {max(rel):.1e}); -phi/u'>0 and P checks "
                   + ",".join(c.status for c in checks + pchecks), tm.seconds)
    assert ok


def test_criterion_12_determinism(record, tmp_path):
    with Timer() as tm:
        for tag in ("a", "b"):
            _scan_and_solve(tmp_path / tag / "run")
            _compare(tmp_path / tag / "cmp", TROY_ALPHA[2])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.is_file())
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = len(files) >= 5 and all(same)
    record(12, ok, f"{sum(same)}/{len(files)} output files byte-identical across two runs",
           tm.seconds)
    assert ok
