"""Named numerical checks of the structural properties of radial shots.

Each check returns a :class:`CheckResult` whose ``margin`` is the worst
scaled slack found (positive means the property held with room to spare)
and whose ``location`` is where that worst slack occurred. Checks that need
a hypothesis on ``f`` consult :func:`hypotheses` and are skipped, with the
missing hypothesis named, when it does not hold at the given dimension.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .functionals import (Branch, DomainError, extract_branches, H_of, trace_P, trace_Pbar,
                          trace_Q, trace_S12, trace_W, trace_Wtilde, dirichlet_P_of_r)
from .nonlinearity import HypothesisReport, Nonlinearity, check_hypotheses, parse_family
from .radial_ode import ProblemConfig, Trajectory, integrate
from .shooting import classify, dirichlet_zero, find_bound_state, solve_dirichlet

__all__ = [
    "CheckResult",
    "Ordering",
    "ComparisonReport",
    "hypotheses",
    "check_I_monotone",
    "check_I_derivative",
    "check_residual",
    "check_Q_monotone",
    "check_P_monotone",
    "check_phi",
    "check_variational_identity",
    "check_wronskian",
    "check_phi_fd",
    "check_scaling",
    "check_dirichlet",
    "check_dirichlet_P",
    "compare_pair",
    "pair_study",
    "run_suite",
    "default_plan",
    "report_json",
]

EPS = np.finfo(float).eps
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | skipped | inconclusive
    margin: float = math.nan
    location: float | None = None
    inputs: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("margin", "location"):
            v = d[key]
            if isinstance(v, float) and not math.isfinite(v):
                d[key] = None
        return d

    def line(self) -> str:
        loc = "" if self.location is None else f" at {self.location:.10g}"
        tail = f" ({self.detail})" if self.detail else ""
        return f"{self.name}: {self.status} margin={self.margin:.3g}{loc}{tail}"


def _inputs(traj: Trajectory) -> dict:
    return {"family": traj.nl.spec, "n": traj.n, "alpha": traj.alpha}


def _skip(name, reason, inputs) -> CheckResult:
    return CheckResult(name, "skipped", inputs=inputs, detail=reason)


def _judge(name, slack, where, tol, inputs, detail="") -> CheckResult:
    """``slack`` >= -tol everywhere passes; margin is the minimum slack."""
    slack = np.asarray(slack, dtype=float)
    if slack.size == 0:
        return CheckResult(name, "pass", 0.0, None, inputs, detail or "empty domain")
    i = int(np.argmin(slack))
    status = "pass" if slack[i] >= -tol else "fail"
    return CheckResult(name, status, float(slack[i]), float(where[i]), inputs, detail)


@lru_cache(maxsize=128)
def hypotheses(nl: Nonlinearity, n: float) -> HypothesisReport:
    return check_hypotheses(nl, n, s_max=max(10.0, 4.0 * nl.beta))


def _requires(nl, n, *names) -> str | None:
    rep = hypotheses(nl, n)
    missing = [h for h in names if rep[h].status != "pass"]
    return f"requires {', '.join(missing)}" if missing else None


def _gauss(traj: Trajectory, g, a: float, b: float) -> float:
    """Composite Gauss-Legendre of g(r, state) over [a, b] split at nodes."""
    if b <= a:
        return 0.0
    inner = traj.r[(traj.r > a) & (traj.r < b)]
    cuts = np.concatenate([[a], inner, [b]])
    lo, hi = cuts[:-1], cuts[1:]
    mid, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + hw[:, None] * _GL_X[None, :]
    vals = g(pts, traj(pts))
    return float(np.sum(vals * _GL_W[None, :] * hw[:, None]))


def _vec(fn):
    return np.vectorize(fn, otypes=[float])


# ---------------------------------------------------------------------------
# energy and integrator consistency


def check_I_monotone(traj: Trajectory) -> CheckResult:
    I = traj.I
    scale = 1.0 + abs(I[0])
    if len(I) < 2:
        return CheckResult("I-monotone", "pass", 0.0, None, _inputs(traj))
    slack = -np.diff(I) / scale
    return _judge("I-monotone", slack, traj.r[1:], 1e-9, _inputs(traj))


def _kink_radii(traj: Trajectory) -> list[float]:
    """Radii (node-interpolated) where |u| crosses a kink of f."""
    out = []
    a = np.abs(traj.u)
    for k in traj.nl.kinks:
        d = a - k
        for i in np.nonzero(d[:-1] * d[1:] <= 0)[0]:
            w = d[i] / (d[i] - d[i + 1]) if d[i] != d[i + 1] else 0.0
            out.append(float(traj.r[i] + w * (traj.r[i + 1] - traj.r[i])))
    return out


def _event_mask(traj: Trajectory, lo, hi, reach=1e-3):
    near = np.zeros(len(lo), bool)
    for rr in [e.r for e in traj.events] + _kink_radii(traj):
        w = reach * (1.0 + rr)
        near |= (hi >= rr - w) & (lo <= rr + w)
    return near


def check_I_derivative(traj: Trajectory, tol: float = 1e-6) -> CheckResult:
    """Per-step increment of I against the integral of -2(n-1)u'^2/r.

    Steps within 1e-3(1+r) of an event, or of a radius where |u| crosses a
    kink of f, are excluded. The comparison carries
    an absolute floor of 16 eps (1+|I|), the rounding level of I itself.
    """
    n = traj.n
    r, I = traj.r, traj.I
    if len(r) < 2:
        return CheckResult("I-derivative", "pass", 0.0, None, _inputs(traj))
    lo, hi = r[:-1], r[1:]
    mid, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + hw[:, None] * _GL_X[None, :]
    du = traj(pts)[..., 1]
    G = np.sum(_GL_W * (-2.0 * (n - 1.0) * du ** 2 / pts), axis=1) * hw
    dI = np.diff(I)
    floor = 16.0 * EPS * (1.0 + np.maximum(np.abs(I[:-1]), np.abs(I[1:])))
    err = np.abs(dI - G) / (np.abs(G) + floor / tol)
    keep = ~_event_mask(traj, lo, hi)
    return _judge("I-derivative", (tol - err)[keep], mid[keep], 0.0, _inputs(traj),
                  f"{int(keep.sum())} of {len(keep)} steps")


def check_residual(traj: Trajectory, tol: float = 1e-7) -> CheckResult:
    """|u'' + (n-1)u'/r + f(u)| at accepted nodes, u'' from the interpolant."""
    n, nl = traj.n, traj.nl
    r = traj.r[1:]
    st = traj.y[1:]
    d2 = traj(r, derivative=True)[:, 1]
    f = _vec(nl.f)(st[:, 0])
    res = np.abs(d2 + (n - 1.0) / r * st[:, 1] + f) / (1.0 + np.abs(f))
    keep = st[:, 0] != 0.0
    return _judge("residual", (tol - res)[keep], r[keep], 0.0, _inputs(traj))


# ---------------------------------------------------------------------------
# Q and P monotonicity


def _outer_pieces(branch: Branch, beta: float, b: float, count: int):
    """s-grids on the parts of the branch with |s| >= beta, off the b-guard."""
    lo, hi = branch.s_lo, branch.s_hi
    pieces = []
    for a, c in ((max(lo, beta), hi), (lo, min(hi, -beta))):
        if c > a:
            g = np.linspace(a, c, count)
            if b > 0:
                g = g[np.abs(np.abs(g) - b) >= 1e-6 * beta]
            if g.size >= 3:
                pieces.append(g)
    return pieces


def _monotone(name, branch, tracer, sign, count, inputs):
    nl = branch.traj.nl
    slacks, where = [], []
    for g in _outer_pieces(branch, nl.beta, nl.b, count):
        tr = tracer(branch, g)
        v = tr.values
        d = np.diff(v) / np.diff(g)
        scale = max(1.0, float(np.max(np.abs(v))))
        slacks.append(sign * d / scale)
        where.append(0.5 * (g[1:] + g[:-1]))
    if not slacks:
        return CheckResult(name, "skipped", inputs=inputs, detail="branch has no |s| >= beta part")
    return _judge(name, np.concatenate(slacks), np.concatenate(where), 1e-6, inputs,
                  f"branch {branch.index} {branch.orientation}")


def check_Q_monotone(branch: Branch, count: int = 401) -> CheckResult:
    """Q' >= 0 on descending, Qbar' <= 0 on ascending branches, |s| >= beta."""
    t = branch.traj
    inputs = {**_inputs(t), "branch": branch.index}
    if t.n > 4:
        return _skip("Q-monotone", "requires n <= 4", inputs)
    why = _requires(t.nl, t.n, "f4p")
    if why:
        return _skip("Q-monotone", why, inputs)
    sign = 1.0 if branch.decreasing else -1.0
    return _monotone("Q-monotone", branch, trace_Q, sign, count, inputs)


def check_P_monotone(branch: Branch, count: int = 401) -> CheckResult:
    """P' >= 0 on descending, Pbar' <= 0 on ascending branches, |s| >= beta."""
    t = branch.traj
    inputs = {**_inputs(t), "branch": branch.index}
    why = _requires(t.nl, t.n, "f4")
    if why:
        return _skip("P-monotone", why, inputs)
    if branch.decreasing:
        return _monotone("P-monotone", branch, trace_P, 1.0, count, inputs)
    return _monotone("P-monotone", branch, trace_Pbar, -1.0, count, inputs)


def fd_identity(branch: Branch, tracer, count: int = 40, h: float | None = None,
                pad: float = 0.05) -> float:
    """Worst relative gap between a centered difference and the closed form."""
    nl = branch.traj.nl
    worst = 0.0
    for g in _outer_pieces(branch, nl.beta, nl.b, 3):
        a, c = g[0], g[-1]
        span = c - a
        step = h if h is not None else 2e-4 * max(1.0, span)
        pts = np.linspace(a + pad * span, c - pad * span, count)
        pts = pts[(pts - step > a) & (pts + step < c)]
        if nl.b > 0:
            pts = pts[np.abs(np.abs(pts) - nl.b) > 10 * step]
        if pts.size == 0:
            continue
        tp, tm, t0 = tracer(branch, pts + step), tracer(branch, pts - step), tracer(branch, pts)
        fd = (tp.values - tm.values) / (2 * step)
        worst = max(worst, float(np.max(np.abs(fd - t0.derivative)) / max(1e-300, np.max(np.abs(t0.derivative)))))
    return worst


# ---------------------------------------------------------------------------
# phi


def _r_of_level(traj: Trajectory, level: float) -> float | None:
    """First radius on the initial descent where u = level."""
    T = traj.events_of("du-zero")
    r_hi = T[0].r if T else traj.r_end
    if not (traj.value(r_hi, 0) < level < traj.alpha):
        return None
    return brentq(lambda r: traj.value(r, 0) - level, traj.r_start, r_hi, xtol=1e-14, rtol=1e-13)


def check_phi(traj: Trajectory, beta: float | None = None, b: float | None = None) -> list[CheckResult]:
    """Three sub-checks on the sign structure of phi."""
    nl, n = traj.nl, traj.n
    beta = nl.beta if beta is None else beta
    b = nl.b if b is None else b
    inputs = _inputs(traj)
    out = []

    # (1) phi > 0 before r(beta)
    name = "phi-positive"
    r_beta = _r_of_level(traj, beta) if beta > 0 else None
    why = "beta-based condition, b = 0 family" if b == 0 else _requires(nl, n, "f1", "f2", "f3")
    if why:
        out.append(_skip(name, why, inputs))
    elif r_beta is None:
        out.append(_skip(name, "shot does not reach beta", inputs))
    else:
        m = traj.r < r_beta
        phi = traj.phi[m]
        out.append(_judge(name, phi, traj.r[m], 0.0, inputs, f"r(beta)={r_beta:.12g}"))
        if out[-1].status == "pass" and phi.min() <= 0:
            out[-1].status = "fail"

    # (2) a phi-zero between consecutive extremal points
    name = "phi-interlace"
    hyp = ("f1p", "f2p") if b == 0 else ("f1", "f2")
    why = _requires(nl, n, *hyp)
    T = [traj.r_start] + [e.r for e in traj.events_of("du-zero")]
    if why:
        out.append(_skip(name, why, inputs))
    elif len(T) < 2:
        out.append(_skip(name, "fewer than two extremal points", inputs))
    else:
        zs = np.array([e.r for e in traj.events_of("phi-zero")])
        counts = np.array([np.sum((zs > a) & (zs < c)) for a, c in zip(T[:-1], T[1:])])
        res = CheckResult(name, "pass" if counts.min() >= 1 else "fail", float(counts.min()),
                          float(T[int(np.argmin(counts))]), inputs,
                          f"phi-zeros per window {counts.tolist()}")
        out.append(res)

    # (3) phi < 0 on (z, r(b)) and phi'(r(b)) <= 0 when z <= r(beta)
    name = "phi-negative-window"
    why = "beta-based condition, b = 0 family" if b == 0 else _requires(nl, n, "f4", "f5")
    zs = traj.events_of("phi-zero")
    r_b = _r_of_level(traj, b) if b > 0 else None
    if why:
        out.append(_skip(name, why, inputs))
    elif not zs or r_beta is None or r_b is None:
        out.append(_skip(name, "no phi-zero or level not reached", inputs))
    elif zs[0].r > r_beta:
        out.append(_skip(name, f"first phi-zero {zs[0].r:.12g} beyond r(beta)", inputs))
    else:
        z = zs[0].r
        m = (traj.r > z) & (traj.r < r_b)
        dphi_b = traj.value(r_b, 3)
        slack = np.concatenate([-traj.phi[m], [1e-9 - dphi_b]])
        where = np.concatenate([traj.r[m], [r_b]])
        out.append(_judge(name, slack, where, 0.0, inputs))
    return out


def check_variational_identity(traj: Trajectory, beta: float | None = None,
                               samples: int = 10, tol: float = 1e-6) -> CheckResult:
    """int_0^r (f'(u)(u-beta) - f(u)) phi t^{n-1} dt = r^{n-1}(u' phi - phi'(u - beta))."""
    nl, n = traj.nl, traj.n
    beta = nl.beta if beta is None else beta
    inputs = _inputs(traj)
    r_end = _r_of_level(traj, beta) if beta > 0 else None
    if r_end is None:
        zs = traj.events_of("u-zero")
        r_end = zs[0].r if zs else traj.r_end
    r_end *= 0.999
    fp, f = _vec(nl.fprime), _vec(nl.f)

    def integrand(r, st):
        u, phi = st[..., 0], st[..., 2]
        return (fp(u) * (u - beta) - f(u)) * phi * r ** (n - 1)

    def boundary(r):
        u, du, phi, dphi = traj(r)
        return r ** (n - 1) * (du * phi - dphi * (u - beta))

    r0 = traj.r_start
    radii = np.linspace(r0, r_end, samples + 1)[1:]
    b0 = boundary(r0)
    lhs, rhs, acc, prev = [], [], 0.0, r0
    for r in radii:
        acc += _gauss(traj, integrand, prev, r)
        prev = r
        lhs.append(acc)
        rhs.append(boundary(r) - b0)
    lhs, rhs = np.array(lhs), np.array(rhs)
    scale = 1.0 + np.max(np.abs(rhs))
    slack = tol - np.abs(lhs - rhs) / scale
    return _judge("variational-identity", slack, radii, 0.0, inputs, f"beta={beta:.12g}")


def check_wronskian(traj: Trajectory, tol: float = 1e-6) -> CheckResult:
    """[r^{n-1}(v' phi - v phi')] increments equal int (n-1) r^{n-3} v phi, v = u'.

    Checked over [r0, Z_1] and between consecutive zeros of u.
    """
    nl, n = traj.nl, traj.n
    inputs = _inputs(traj)
    # boundary terms come from the refined event states: phi' is steep at a
    # zero of u when f' is singular there, and the cubic interpolant blurs it
    ends = [(traj.r_start, tuple(traj.y[0]))] + [(e.r, e.state) for e in traj.events_of("u-zero")]
    if len(ends) < 2:
        ends.append((traj.r_end, tuple(traj.y[-1])))
    zs = [r for r, _ in ends]
    states = dict(ends)

    def B(r):
        u, v, phi, dphi = states[r]
        dv = -(n - 1.0) / r * v - nl.f(u)
        return r ** (n - 1) * (dv * phi - v * dphi)

    def integrand(r, st):
        return (n - 1.0) * r ** (n - 3.0) * st[..., 1] * st[..., 2]

    slack, where = [], []
    for a, c in zip(zs[:-1], zs[1:]):
        ba, bc = B(a), B(c)
        lhs = bc - ba
        rhs = _gauss(traj, integrand, a, c)
        scale = max(abs(ba), abs(bc), abs(rhs), 1e-300)
        slack.append(tol - abs(lhs - rhs) / scale)
        where.append(c)
    return _judge("wronskian", slack, where, 0.0, inputs, f"{len(slack)} intervals")


def check_phi_fd(nl: Nonlinearity, n: float, alpha: float, cfg: ProblemConfig | None = None,
                 rel_step: float = 1e-6, tol: float = 1e-4) -> CheckResult:
    """phi against (u(alpha+d) - u(alpha-d)) / 2d before the first zero of u."""
    cfg = replace(cfg or ProblemConfig(n=n, alpha=alpha, r_max=50.0), n=n, alpha=alpha, with_phi=True)
    inputs = {"family": nl.spec, "n": n, "alpha": alpha}
    base = integrate(nl, cfg)
    zs = base.events_of("u-zero")
    r_top = zs[0].r if zs else base.r_end
    d = rel_step * alpha
    fine = replace(cfg, rtol=min(cfg.rtol, 1e-12), atol=min(cfg.atol, 1e-14), with_phi=False)
    up = integrate(nl, replace(fine, alpha=alpha + d))
    dn = integrate(nl, replace(fine, alpha=alpha - d))
    lo = max(base.r_start, up.r_start, dn.r_start)
    hi = min(r_top, up.r_end, dn.r_end) * (1 - 1e-9)
    rr = np.linspace(lo, hi, 400)
    fd = (up(rr)[:, 0] - dn(rr)[:, 0]) / (2 * d)
    phi = base(rr)[:, 2]
    slack = tol - np.abs(fd - phi) / (1.0 + np.abs(phi))
    return _judge("phi-fd", slack, rr, 0.0, inputs)


# ---------------------------------------------------------------------------
# b = 0 families


def check_scaling(nl: Nonlinearity, n: float, alphas, zeros: int = 3,
                  tol: float = 1e-6, cfg: ProblemConfig | None = None) -> CheckResult:
    """Z_i(alpha) alpha^{-(1-q)/2} constant across alphas (pure_power only)."""
    inputs = {"family": nl.spec, "n": n, "alphas": [float(a) for a in alphas]}
    if nl.tag != "pure_power":
        return _skip("scaling", "pure_power families only", inputs)
    q = nl.param["q"]
    expo = -(1.0 - q) / 2.0
    table = []
    for a in alphas:
        _, traj = dirichlet_zero(nl, n, float(a), zeros, cfg)
        z = [e.r for e in traj.events_of("u-zero")][:zeros]
        if len(z) < zeros:
            return CheckResult("scaling", "fail", -math.inf, float(a), inputs, "zeros not reached")
        table.append(np.array(z) * float(a) ** expo)
    table = np.array(table)
    ref = table.mean(axis=0)
    spread = np.max(np.abs(table - ref) / ref, axis=0)
    i = int(np.argmax(spread))
    return CheckResult("scaling", "pass" if spread[i] <= tol else "fail", float(tol - spread[i]),
                       float(i + 1), inputs, f"normalized zeros {ref.tolist()}")


def check_dirichlet(sol, tol: float = 1e-10) -> CheckResult:
    """k interior zeros, Z_{k+1} = rho, and -phi/u' > 0 at every zero."""
    traj = sol.trajectory
    inputs = {**_inputs(traj), "rho": sol.rho, "k": sol.k}
    zs = traj.events_of("u-zero")
    interior = [e for e in zs if e.r < sol.rho * (1 - tol)]
    if len(interior) != sol.k:
        return CheckResult("dirichlet", "fail", -1.0, sol.rho, inputs,
                           f"{len(interior)} interior zeros, expected {sol.k}")
    if sol.degenerate:
        return CheckResult("dirichlet", "pass", 0.0, None, inputs, "degenerate: Z is flat in alpha")
    last = zs[sol.k]
    gap = abs(last.r - sol.rho) / sol.rho
    ratios = np.array([-e.phi / e.du for e in zs[:sol.k + 1]])
    slack = np.concatenate([[tol - gap], ratios])
    where = np.concatenate([[last.r], [e.r for e in zs[:sol.k + 1]]])
    res = _judge("dirichlet", slack, where, 0.0, inputs, f"-phi/u' at zeros {ratios.tolist()}")
    if res.status == "pass" and ratios.min() <= 0:
        res.status = "fail"
    return res


def check_dirichlet_P(traj: Trajectory, count: int = 2000, tol: float = 1e-6) -> CheckResult:
    """P(r0) ~ 0 and P non-increasing along the shot (b = 0 families)."""
    nl = traj.nl
    inputs = _inputs(traj)
    if nl.b != 0:
        return _skip("dirichlet-P", "b = 0 families only", inputs)
    rr = np.linspace(traj.r_start, traj.r_end, count)
    zs = np.array([e.r for e in traj.events_of("u-zero")])
    if zs.size:
        rr = rr[np.min(np.abs(rr[:, None] - zs[None, :]), axis=1) >= 1e-5 * np.maximum(1.0, rr)]
    tr = dirichlet_P_of_r(traj, rr)
    v = tr.values
    scale = max(1.0, float(np.max(np.abs(v))))
    start = abs(v[0]) / scale
    slope = -np.diff(v) / np.diff(rr) / scale
    slack = np.concatenate([[tol - start], slope])
    where = np.concatenate([[rr[0]], 0.5 * (rr[1:] + rr[:-1])])
    return _judge("dirichlet-P", slack, where, tol, inputs, f"P(r0)={v[0]:.3g}")


# ---------------------------------------------------------------------------
# pair comparison


@dataclass
class Ordering:
    name: str
    lhs: float
    rhs: float
    relation: str  # "<" or ">"
    margin: float
    status: str  # holds | inconclusive
    location: float | None = None

    @classmethod
    def make(cls, name, lhs, rhs, relation, location=None, strict=1e-10):
        diff = (rhs - lhs) if relation == "<" else (lhs - rhs)
        margin = diff / max(1.0, abs(lhs), abs(rhs))
        return cls(name, float(lhs), float(rhs), relation, float(margin),
                   "holds" if margin > strict else "inconclusive", location)


@dataclass
class ComparisonReport:
    alpha1: float
    alpha2: float
    k: int
    intersections: list = field(default_factory=list)  # [(lo, hi, [radii])]
    extremal: list = field(default_factory=list)
    q_chain: list = field(default_factory=list)
    w_sep: list = field(default_factory=list)
    z_order: list = field(default_factory=list)
    s12: list = field(default_factory=list)
    U_I: float | None = None
    delta: float | None = None
    notes: list = field(default_factory=list)

    def orderings(self) -> list[Ordering]:
        return self.extremal + self.q_chain + self.w_sep + self.z_order + self.s12

    @property
    def intersections_ok(self) -> bool:
        return bool(self.intersections) and all(len(x[2]) >= 1 for x in self.intersections)

    @property
    def all_strict(self) -> bool:
        return self.intersections_ok and all(o.status == "holds" for o in self.orderings())

    def verdict(self) -> str:
        return "pass" if self.all_strict else "inconclusive"

    def to_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "k": self.k, "delta": self.delta,
                "U_I": self.U_I, "verdict": self.verdict(),
                "intersections": [{"window": [a, b], "radii": rs} for a, b, rs in self.intersections],
                "orderings": [asdict(o) for o in self.orderings()], "notes": self.notes}

    def lines(self) -> list[str]:
        out = [f"pair alpha1={self.alpha1!r} alpha2={self.alpha2!r} k={self.k}"]
        for a, b, rs in self.intersections:
            out.append(f"  intersections in ({a:.10g}, {b:.10g}): {len(rs)}")
        for o in self.orderings():
            out.append(f"  {o.name}: {o.lhs:.15g} {o.relation} {o.rhs:.15g} "
                       f"margin={o.margin:.3g} {o.status}")
        out.extend(f"  note: {x}" for x in self.notes)
        return out


class ComparisonError(ValueError):
    pass


def _extrema(traj):
    T = [traj.r_start] + [e.r for e in traj.events_of("du-zero")]
    E = [traj.alpha] + [e.u for e in traj.events_of("du-zero")]
    return T, E


def _crossings(t1: Trajectory, t2: Trajectory, lo: float, hi: float) -> list[float]:
    if not hi > lo:
        return []
    grid = np.union1d(t1.r[(t1.r > lo) & (t1.r < hi)], t2.r[(t2.r > lo) & (t2.r < hi)])
    grid = np.concatenate([[lo], grid, [hi]])
    fine = np.union1d(grid, 0.5 * (grid[1:] + grid[:-1]))
    d = t1(fine)[:, 0] - t2(fine)[:, 0]
    out = []
    for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        out.append(brentq(lambda r: t1.value(r, 0) - t2.value(r, 0), fine[i], fine[i + 1],
                          xtol=1e-14, rtol=1e-13))
    out.extend(float(fine[i]) for i in np.nonzero(d == 0.0)[0] if lo < fine[i] < hi)
    return sorted(out)


def _Q_at_extremum(nl, n, T, E):
    return -2.0 * T * T * nl.F(E) + H_of(nl, n, E)


def z_ordering(t1: Trajectory, t2: Trajectory, k: int) -> list[Ordering]:
    z1, z2 = t1.events_of("u-zero"), t2.events_of("u-zero")
    if len(z1) < k or len(z2) < k:
        return []
    a, b = z1[k - 1], z2[k - 1]
    return [Ordering.make(f"Z{k}(a1)>Z{k}(a2)", a.r, b.r, ">", a.r),
            Ordering.make(f"|u1'(Z{k})|<|u2'(Z{k})|", abs(a.du), abs(b.du), "<", a.r)]


def compare_pair(traj1: Trajectory, traj2: Trajectory, k: int, grid_count: int = 201) -> ComparisonReport:
    """Orderings between two shots alpha1 < alpha2 on the same family and n."""
    if traj1.alpha > traj2.alpha:
        traj1, traj2 = traj2, traj1
    nl, n = traj1.nl, traj1.n
    if traj2.nl != nl or traj2.n != n:
        raise ComparisonError("trajectories differ in family or dimension")
    rep = ComparisonReport(traj1.alpha, traj2.alpha, k)
    T1, E1 = _extrema(traj1)
    T2, E2 = _extrema(traj2)
    if len(T1) < k or len(T2) < k:
        raise ComparisonError(f"need {k} extremal points on both shots, have {len(T1)}, {len(T2)}")
    if traj1.alpha == traj2.alpha:
        rep.notes.append("alpha1 == alpha2: degenerate pair")
        for i in range(k):
            rep.extremal.append(Ordering(f"E{i}", E1[i], E2[i], "?", 0.0, "inconclusive"))
        return rep
    br1, br2 = extract_branches(traj1), extract_branches(traj2)

    # extremal values and Q at extrema
    for i in range(k):
        is_max = i % 2 == 0
        tag = "M" if is_max else "m"
        rep.extremal.append(Ordering.make(f"{tag}1{'<' if is_max else '>'}{tag}2 (T{i})",
                                          E1[i], E2[i], "<" if is_max else ">", T1[i]))
        if abs(E1[i]) < nl.beta or abs(E2[i]) < nl.beta:
            rep.notes.append(f"extremum T{i} inside (-beta, beta); Q chain stops")
            break
        q1 = _Q_at_extremum(nl, n, T1[i], E1[i])
        q2 = _Q_at_extremum(nl, n, T2[i], E2[i])
        # Q2 at E1, on the descending branch of shot 2 adjacent to T_i
        idx = i if not is_max else i + 1
        b2 = next((b for b in br2 if b.index == idx and b.decreasing), None)
        if b2 is not None and b2.contains(E1[i]):
            q21 = float(trace_Q(b2, [E1[i]]).values[0])
            rep.q_chain.append(Ordering.make(f"Q1({tag}1)>Q2({tag}1)", q1, q21, ">", E1[i]))
            if not is_max:
                # Q2 increases along s, so only the minimum side gives a strict step
                rep.q_chain.append(Ordering.make(f"Q2({tag}1)>Q2({tag}2)", q21, q2, ">", E1[i]))
        rep.q_chain.append(Ordering.make(f"Q1({tag}1)>Q2({tag}2)", q1, q2, ">", E1[i]))

    # intersections per inter-extremal window, then the final window
    end = min(traj1.r_end, traj2.r_end)
    for i in range(1, k):
        lo, hi = min(T1[i - 1], T2[i - 1]), min(max(T1[i], T2[i]), end)
        rep.intersections.append((lo, hi, _crossings(traj1, traj2, lo, hi)))
    lo = min(T1[k - 1], T2[k - 1])
    rep.intersections.append((lo, end, _crossings(traj1, traj2, lo, end)))
    first = rep.intersections[0][2]
    if first:
        rep.U_I = traj1.value(first[0], 0)

    # W and Wtilde separation on the first descent, s in [-beta, min(beta, U_I))
    if rep.U_I is not None and br1 and br2:
        top = min(nl.beta, rep.U_I)
        if top > -nl.beta:
            s = np.linspace(-nl.beta, top, grid_count + 1)[:-1]
            s = s[(s >= max(br1[0].s_lo, br2[0].s_lo))]
            # keep the admissible set (u')^2 + 2F(s) > 0 of both shots
            ok = np.ones(len(s), bool)
            for br in (br1[0], br2[0]):
                _, du = br.invert(s)
                ok &= du ** 2 + 2.0 * np.array([nl.F(x) for x in s]) > 0.0
            if not ok.all():
                rep.notes.append(f"W window trimmed to the admissible set ({int(ok.sum())} of {len(s)})")
            s = s[ok]
            try:
                for tr_fn, label in ((trace_W, "W"), (trace_Wtilde, "Wtilde")):
                    w1, w2 = tr_fn(br1[0], s), tr_fn(br2[0], s)
                    dr = (w1.r - w2.r) / np.maximum(1.0, w1.r)
                    dw = (w2.values - w1.values) / np.maximum(1.0, np.abs(w2.values))
                    j, l = int(np.argmin(dr)), int(np.argmin(dw))
                    if label == "W":
                        rep.w_sep.append(Ordering("r1(s)>r2(s)", w1.r[j], w2.r[j], ">", float(dr[j]),
                                                  "holds" if dr[j] > 1e-10 else "inconclusive", float(s[j])))
                    rep.w_sep.append(Ordering(f"{label}1(s)<{label}2(s)", w1.values[l], w2.values[l], "<",
                                              float(dw[l]), "holds" if dw[l] > 1e-10 else "inconclusive",
                                              float(s[l])))
            except DomainError as exc:
                rep.notes.append(f"W separation: {exc}")
        else:
            rep.notes.append("U_I < -beta: W window empty")

    # Z_k ordering on this pair (when both reach a k-th zero)
    rep.z_order = z_ordering(traj1, traj2, k)
    if not rep.z_order:
        rep.notes.append(f"Z{k} ordering needs both shots to reach a {k}-th zero")

    # Sbar12 on the first ascent between m1 and the second-window intersection
    if k >= 2 and len(rep.intersections) >= 2 and rep.intersections[1][2]:
        ub = traj1.value(rep.intersections[1][2][0], 0)
        a1 = next((b for b in br1 if b.index == 2), None)
        a2 = next((b for b in br2 if b.index == 2), None)
        m1 = E1[1]
        if a1 is not None and a2 is not None and m1 < ub <= -nl.beta and a2.contains(m1):
            s = np.linspace(m1, ub, grid_count)
            s = s[s <= min(a1.s_hi, a2.s_hi)]
            tr = trace_S12(a1, a2, s)
            rep.s12.append(Ordering.make("Sbar12(m1)=0", abs(tr.values[0]), 1e-6, "<", m1))
            j = int(np.argmax(tr.values))
            rep.s12.append(Ordering.make("Sbar12<1 on [m1, Ubar_I]", tr.values[j], 1.0, "<", float(s[j])))
        else:
            rep.notes.append("Sbar12 bound not applicable (Ubar_I outside [m1, -beta])")
    return rep


def _pair_horizon(nl, n, alphas, k, cfg):
    stops = []
    for a in alphas:
        c = classify(nl, n, a, replace(cfg, with_phi=False), k)
        stops.append(max([*c.zeros, *c.extrema_r, 1.0]))
    return 1.1 * max(stops) + 1.0


def pair_study(nl: Nonlinearity, n: float, alpha_star: float, k: int,
               deltas=(1e-3, 1e-4, 1e-5), cfg: ProblemConfig | None = None) -> ComparisonReport:
    """Compare alpha* -+ delta, shrinking delta while any ordering is non-strict.

    The Z_k ordering needs two shots that both reach a k-th zero, so it is
    taken from the pair (alpha*+delta, alpha*+2delta) on the N-side.
    """
    cfg = cfg or ProblemConfig(n=n, alpha=alpha_star, r_max=100.0)
    rep = None
    for d in deltas:
        alphas = (alpha_star - d, alpha_star + d, alpha_star + 2 * d)
        horizon = _pair_horizon(nl, n, alphas, k, cfg)
        trajs = [integrate(nl, replace(cfg, alpha=a, r_max=horizon, with_phi=False)) for a in alphas]
        rep = compare_pair(trajs[0], trajs[1], k)
        rep.delta = d
        zo = z_ordering(trajs[1], trajs[2], k)
        if zo:
            rep.z_order = zo
            rep.notes = [x for x in rep.notes if not x.startswith(f"Z{k} ordering")]
        if rep.all_strict:
            break
        rep.notes.append(f"non-strict at delta={d:g}; retry smaller")
    return rep


# ---------------------------------------------------------------------------
# suite


def default_plan(nl: Nonlinearity, n: float, k_max: int = 2) -> list[dict]:
    """A full plan for a family: shots at alpha*_k -+ 1e-3 plus pair studies."""
    if nl.b == 0:
        plan = [{"check": "scaling", "alphas": [0.5, 1.0, 2.0, 4.0]}]
        plan += [{"check": "dirichlet", "rho": 1.0, "k": k} for k in range(k_max + 1)]
        plan += [{"check": c, "alpha": 1.0} for c in ("I_monotone", "I_derivative", "residual",
                                                     "wronskian", "phi_fd", "variational_identity")]
        return plan
    plan = []
    for k in range(1, k_max + 1):
        for side in (-1e-3, 1e-3):
            for c in ("I_monotone", "I_derivative", "residual", "Q_monotone", "P_monotone", "phi",
                      "variational_identity", "wronskian", "phi_fd"):
                plan.append({"check": c, "k": k, "offset": side})
        if k >= 2:
            plan.append({"check": "compare", "k": k})
    return plan


@lru_cache(maxsize=64)
def _bound_state(nl, n, k, lo, hi):
    return find_bound_state(nl, n, k, (lo, hi)).alpha_star


def _run_one(args) -> list[CheckResult]:
    nl, n, step, cfg = args
    name = step.get("check", "?")
    try:
        return _dispatch(nl, n, step, cfg)
    except Exception as exc:  # captured per check, the suite continues
        return [CheckResult(name, "fail", math.nan, None, {"family": nl.spec, "n": n, **step},
                            f"error: {exc!r}")]


def _alpha_for(nl, n, step):
    if "alpha" in step:
        return float(step["alpha"])
    lo, hi = step.get("bracket", (nl.beta * (1 + 1e-9), 50.0))
    return _bound_state(nl, n, int(step["k"]), float(lo), float(hi)) + float(step.get("offset", 0.0))


def _dispatch(nl, n, step, cfg) -> list[CheckResult]:
    name = step["check"]
    if name == "hypotheses":
        rep = hypotheses(nl, n)
        return [CheckResult(f"hypothesis-{h}", "pass" if v.status == "pass" else
                            ("skipped" if v.status == "not-applicable" else "fail"),
                            v.margin, v.at, {"family": nl.spec, "n": n}, v.note)
                for h, v in rep.verdicts.items() if h in step.get("names", rep.verdicts)]
    if name == "scaling":
        return [check_scaling(nl, n, step["alphas"], step.get("zeros", 3))]
    if name == "dirichlet":
        sol = solve_dirichlet(nl, n, float(step["rho"]), int(step["k"]))
        return [check_dirichlet(sol), check_dirichlet_P(sol.trajectory)]
    if name == "compare":
        k = int(step["k"])
        a = _alpha_for(nl, n, {**step, "offset": 0.0})
        rep = pair_study(nl, n, a, k, step.get("deltas", (1e-3, 1e-4, 1e-5)))
        why = _requires(nl, n, "f4p")
        status = "skipped" if why else rep.verdict()
        margin = min((o.margin for o in rep.orderings()), default=math.nan)
        return [CheckResult("compare", status, margin, rep.U_I,
                            {"family": nl.spec, "n": n, "alpha1": rep.alpha1, "alpha2": rep.alpha2,
                             "k": k, "delta": rep.delta}, why or "; ".join(rep.lines()[1:]))]
    alpha = _alpha_for(nl, n, step)
    c = replace(cfg, n=n, alpha=alpha, with_phi=True)
    if "k" in step and "r_max" not in step:
        c = replace(c, r_max=_pair_horizon(nl, n, (alpha,), int(step["k"]), c))
    if name == "phi_fd":
        return [check_phi_fd(nl, n, alpha, c)]
    traj = integrate(nl, c)
    if name == "I_monotone":
        return [check_I_monotone(traj)]
    if name == "I_derivative":
        return [check_I_derivative(traj)]
    if name == "residual":
        return [check_residual(traj)]
    if name == "Q_monotone":
        return [check_Q_monotone(b) for b in extract_branches(traj) if b.decreasing]
    if name == "P_monotone":
        brs = extract_branches(traj)
        return [check_P_monotone(brs[0])] if brs else []
    if name == "phi":
        return check_phi(traj)
    if name == "variational_identity":
        return [check_variational_identity(traj)]
    if name == "wronskian":
        return [check_wronskian(traj)]
    raise ValueError(f"unknown check {name!r}")


def run_suite(family: Nonlinearity | str, n: float, plan: list[dict],
              cfg: ProblemConfig | None = None, jobs: int = 1) -> list[CheckResult]:
    """Run every plan step; errors become failed results, order follows the plan."""
    nl = parse_family(family) if isinstance(family, str) else family
    cfg = cfg or ProblemConfig(n=n, alpha=max(1.0, 2 * nl.beta), r_max=100.0)
    tasks = [(nl, n, dict(step), cfg) for step in plan]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def report_json(results: list[CheckResult], path=None, header: dict | None = None) -> str:
    doc = {"config": header or {}, "checks": [r.to_dict() for r in results],
           "failed": sum(r.failed for r in results)}
    text = json.dumps(doc, indent=2, sort_keys=False, default=float)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
