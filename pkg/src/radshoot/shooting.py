"""Shooting in the initial amplitude alpha.

A shot is classified by following it through its zeros and extremal points:
it either crosses zero transversally ``k_max`` times (``reaches-N``), turns
around at an extremum where ``2F(u) < 0`` (``lands-P``; since the energy
decreases, no further zero is possible), comes to rest near zero at the
horizon (``G-candidate``), or stays ``undetermined``.

Bound states are never claimed exactly: :func:`find_bound_state` returns a
bracket of amplitudes classified on opposite sides at level ``k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .nonlinearity import Nonlinearity
from .radial_ode import IntegrationError, ProblemConfig, Trajectory, integrate

__all__ = [
    "Classification",
    "BoundState",
    "DirichletSolution",
    "ShootingError",
    "classify",
    "reaches",
    "find_bound_state",
    "locate_bracket",
    "scan",
    "switch_points",
    "scan_to_csv",
    "solve_dirichlet",
    "dirichlet_zero",
]

OUTCOMES = ("reaches-N", "lands-P", "G-candidate", "undetermined")


class ShootingError(RuntimeError):
    """Bracketing failure or a classification that stays undetermined."""

    def __init__(self, message, alpha=None):
        super().__init__(message)
        self.alpha = alpha


@dataclass
class Classification:
    alpha: float
    outcome: str
    level: int
    zeros: list[float] = field(default_factory=list)
    slopes: list[float] = field(default_factory=list)
    extrema_r: list[float] = field(default_factory=list)
    extrema_u: list[float] = field(default_factory=list)
    p_level: int | None = None
    I_stop: float = math.nan
    final_state: tuple = ()
    termination: str = ""
    note: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def label(self) -> str:
        tag = {"reaches-N": "N", "lands-P": "P", "G-candidate": "G"}.get(self.outcome)
        return f"{tag}_{self.level}" if tag else "undetermined"

    def reached(self, k: int) -> bool:
        """True when at least ``k`` transversal zeros were seen."""
        return len(self.zeros) >= k


class _Classifier:
    """Stop predicate implementing the zero/extremum bookkeeping."""

    def __init__(self, nl: Nonlinearity, alpha: float, k_max: int):
        self.F = nl.F
        self.k_max = k_max
        self.floor = 1e-8 * math.sqrt(1.0 + 2.0 * abs(nl.F(alpha)))
        self.zeros, self.slopes = [], []
        self.ext_r, self.ext_u = [0.0], [alpha]
        self.outcome = None
        self.level = 0
        self.I_stop = math.nan

    def __call__(self, r, y, events):
        for e in events:
            if e.kind == "u-zero":
                if abs(e.du) <= self.floor:
                    self.outcome, self.level = "G-candidate", len(self.zeros) + 1
                    self.I_stop = e.du ** 2
                    return True
                self.zeros.append(e.r)
                self.slopes.append(e.du)
                if len(self.zeros) >= self.k_max:
                    self.outcome, self.level = "reaches-N", len(self.zeros)
                    self.I_stop = e.du ** 2
                    return True
            elif e.kind == "du-zero":
                self.ext_r.append(e.r)
                self.ext_u.append(e.u)
                if 2.0 * self.F(e.u) < 0.0:
                    self.outcome, self.level = "lands-P", len(self.zeros) + 1
                    self.I_stop = 2.0 * self.F(e.u)
                    return True
        return False


def classify(nl: Nonlinearity, n: float, alpha: float, cfg: ProblemConfig | None = None,
             k_max: int = 1, *, keep_trajectory: bool = False) -> Classification:
    """Classify the shot ``u(0) = alpha`` up to level ``k_max``.

    ``cfg`` supplies tolerances and the horizon; its ``n`` and ``alpha`` are
    overridden.
    """
    if not alpha > nl.b:
        raise ValueError(f"alpha={alpha} must exceed b={nl.b}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    cfg = replace(cfg or ProblemConfig(n=n, alpha=alpha, r_max=100.0, with_phi=False),
                  n=n, alpha=alpha)
    if 2.0 * nl.F(alpha) < 0.0:
        # criterion fires at T_0 = 0
        c = Classification(alpha, "lands-P", 1, extrema_r=[0.0], extrema_u=[alpha], p_level=1,
                           I_stop=2.0 * nl.F(alpha), termination="classifier-stop")
        if keep_trajectory:
            c.trajectory = integrate(nl, replace(cfg, r_max=min(cfg.r_max, 1e-3)))
        return c
    clf = _Classifier(nl, alpha, k_max)
    try:
        traj = integrate(nl, cfg, stop=clf)
    except IntegrationError as exc:
        return Classification(alpha, "undetermined", len(clf.zeros), clf.zeros, clf.slopes,
                              clf.ext_r, clf.ext_u, termination="error", note=str(exc))
    final = tuple(float(x) for x in traj.y[-1])
    outcome, level, note = clf.outcome, clf.level, ""
    I_end = final[1] ** 2 + 2.0 * nl.F(final[0])
    if outcome is None:
        level = len(clf.zeros) + 1
        if traj.termination == "step-underflow":
            outcome, note = "undetermined", "step underflow"
        elif I_end < 0.0:
            # energy already negative: no further zero can occur
            outcome, note = "lands-P", "I < 0 at horizon without an extremum"
        elif abs(final[0]) < 1e-3 * max(1.0, alpha) and final[0] * final[1] < 0.0:
            outcome = "G-candidate"
        else:
            outcome = "undetermined"
        clf.I_stop = I_end
    c = Classification(alpha, outcome, level, clf.zeros, clf.slopes, clf.ext_r, clf.ext_u,
                       p_level=level if outcome == "lands-P" else None, I_stop=clf.I_stop,
                       final_state=final, termination=traj.termination, note=note)
    if keep_trajectory:
        c.trajectory = traj
    return c


def reaches(c: Classification, k: int) -> bool | None:
    """Side of ``c`` at level ``k``: True (N-side), False (P-side), None."""
    if c.reached(k):
        return True
    if c.outcome == "lands-P" and c.level <= k:
        return False
    return None


def _side(nl, n, alpha, cfg, k, retries=1):
    c = classify(nl, n, alpha, cfg, k)
    side = reaches(c, k)
    while side is None and retries > 0:
        cfg = cfg.tightened()
        c = classify(nl, n, alpha, cfg, k)
        side = reaches(c, k)
        retries -= 1
    if side is None:
        raise ShootingError(f"classification undetermined at alpha={alpha!r} ({c.label}, {c.note})",
                            alpha)
    return side, c


@dataclass
class BoundState:
    k: int
    alpha_star: float
    alpha_lo: float
    alpha_hi: float
    lo: Classification = field(repr=False)  # classification at alpha_lo
    hi: Classification = field(repr=False)  # classification at alpha_hi
    trajectory: Trajectory | None = field(default=None, repr=False)
    iterations: int = 0

    @property
    def width(self) -> float:
        return self.alpha_hi - self.alpha_lo

    @property
    def Z_k(self) -> float:
        """k-th zero of the N-side endpoint (estimate of the bound state's)."""
        side = self.hi if self.hi.reached(self.k) else self.lo
        return side.zeros[self.k - 1]

    @property
    def residual(self) -> tuple[float, float]:
        """(|u|, |u'|) at the last computed radius of the midpoint shot."""
        if self.trajectory is None:
            return (math.nan, math.nan)
        y = self.trajectory.y[-1]
        return (abs(float(y[0])), abs(float(y[1])))

    def report(self) -> dict:
        res = self.residual
        return {"k": self.k, "alpha_star": self.alpha_star, "alpha_lo": self.alpha_lo,
                "alpha_hi": self.alpha_hi, "width": self.width, "Z_k": self.Z_k,
                "lo_label": self.lo.label, "hi_label": self.hi.label,
                "residual_u": res[0], "residual_du": res[1], "iterations": self.iterations}


def find_bound_state(nl: Nonlinearity, n: float, k: int, bracket: tuple[float, float],
                     cfg: ProblemConfig | None = None, width_tol: float = 1e-12) -> BoundState:
    """Bisect on "reaches a k-th zero" down to relative width ``width_tol``.

    The returned bracket has one endpoint on each side; the midpoint
    trajectory is integrated with ``cfg`` (including phi if requested).
    """
    a, b = sorted(float(x) for x in bracket)
    base = replace(cfg or ProblemConfig(n=n, alpha=a, r_max=100.0), n=n, alpha=a)
    shoot = replace(base, with_phi=False)
    sa, ca = _side(nl, n, a, shoot, k)
    sb, cb = _side(nl, n, b, shoot, k)
    if sa == sb:
        raise ShootingError(f"bracket [{a}, {b}] does not separate level {k}: "
                            f"both {ca.label}/{cb.label}", a)
    it = 0
    while b - a > width_tol * abs(0.5 * (a + b)):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        sm, cm = _side(nl, n, mid, shoot, k)
        if sm == sa:
            a, ca = mid, cm
        else:
            b, cb = mid, cm
        it += 1
    mid = 0.5 * (a + b)
    mc = classify(nl, n, mid, replace(base, alpha=mid), k, keep_trajectory=True)
    return BoundState(k, mid, a, b, ca, cb, mc.trajectory, it)


def locate_bracket(nl: Nonlinearity, n: float, k: int, alpha_max: float = 50.0,
                   cfg: ProblemConfig | None = None, count: int = 200,
                   alpha_min: float | None = None) -> tuple[float, float]:
    """First switch of "reaches a k-th zero" on a geometric grid above beta."""
    lo = alpha_min if alpha_min is not None else max(nl.beta, nl.b) * (1 + 1e-9) + 1e-12
    grid = np.geomspace(lo, alpha_max, count)
    base = replace(cfg or ProblemConfig(n=n, alpha=lo, r_max=100.0), with_phi=False)
    prev = None
    for a in grid:
        c = classify(nl, n, float(a), base, k)
        side = reaches(c, k)
        if side is None:
            continue
        if side and prev is not None:
            return (prev, float(a))
        if not side:
            prev = float(a)
    raise ShootingError(f"no switch to level {k} found below alpha={alpha_max}")


def _classify_job(args):
    nl, n, a, cfg, k_max = args
    try:
        return classify(nl, n, a, cfg, k_max)
    except Exception as exc:  # a single point never aborts a sweep
        return Classification(a, "undetermined", 0, termination="error", note=repr(exc))


def scan(nl: Nonlinearity, n: float, alpha_grid, cfg: ProblemConfig | None = None,
         k_max: int = 1, jobs: int = 1) -> list[Classification]:
    """Classify every grid amplitude; output follows grid order."""
    grid = [float(a) for a in alpha_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly increasing")
    if grid and grid[0] <= nl.b:
        raise ValueError("alpha grid must lie above b")
    base = replace(cfg or ProblemConfig(n=n, alpha=grid[0] if grid else 1.0, r_max=100.0),
                   with_phi=False)
    tasks = [(nl, n, a, base, k_max) for a in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_classify_job, tasks, chunksize=16))
    return [_classify_job(t) for t in tasks]


def switch_points(results: list[Classification], k: int) -> list[int]:
    """Indices i where the reach-k predicate differs between i-1 and i."""
    flags = [c.reached(k) for c in results]
    return [i for i in range(1, len(flags)) if flags[i] != flags[i - 1]]


def scan_to_csv(results: list[Classification], path, k_max: int, header=None):
    """Write ``alpha,outcome,level,Z1..Zk,T1..Tk,U1..Uk`` (ragged cells empty)."""
    from .io import write_rows

    cols = (["alpha", "outcome", "level"] + [f"Z{i}" for i in range(1, k_max + 1)]
            + [f"T{i}" for i in range(1, k_max + 1)] + [f"U{i}" for i in range(1, k_max + 1)])

    def pad(xs):
        xs = list(xs)[:k_max]
        return xs + [""] * (k_max - len(xs))

    rows = [[c.alpha, c.outcome, c.level, *pad(c.zeros), *pad(c.extrema_r[1:]), *pad(c.extrema_u[1:])]
            for c in results]
    return write_rows(path, cols, rows, header)


# ---------------------------------------------------------------------------
# Dirichlet problem in a ball


@dataclass
class DirichletSolution:
    rho: float
    k: int
    alpha: float
    zeros: list[float]
    boundary_residual: float
    bracket: tuple[float, float]
    degenerate: bool = False
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def interior_zeros(self) -> list[float]:
        return [z for z in self.zeros if z < self.rho * (1 - 1e-9)]


def dirichlet_zero(nl: Nonlinearity, n: float, alpha: float, j: int,
                   cfg: ProblemConfig | None = None, *, with_phi: bool = True):
    """Radius of the j-th zero of the shot; returns (Z_j or inf, trajectory)."""
    cfg = replace(cfg or ProblemConfig(n=n, alpha=alpha, r_max=100.0), n=n, alpha=alpha,
                  with_phi=with_phi)
    zeros = []

    def stop(r, y, events):
        for e in events:
            if e.kind == "u-zero":
                zeros.append(e.r)
                if len(zeros) >= j:
                    return True
        return False

    traj = integrate(nl, cfg, stop=stop)
    return (zeros[j - 1] if len(zeros) >= j else math.inf), traj


def solve_dirichlet(nl: Nonlinearity, n: float, rho: float, k: int,
                    cfg: ProblemConfig | None = None,
                    bracket: tuple[float, float] | None = None,
                    tol: float = 1e-10) -> DirichletSolution:
    """Find alpha with exactly k zeros in (0, rho) and u(rho) = 0.

    Uses monotonicity of Z_{k+1} in alpha; bisects until
    |Z_{k+1}(alpha) - rho| <= tol * rho.
    """
    if rho <= 0 or k < 0:
        raise ValueError("need rho > 0 and k >= 0")
    j = k + 1
    cfg = cfg or ProblemConfig(n=n, alpha=1.0, r_max=max(100.0, 4 * rho))
    cfg = replace(cfg, r_max=max(cfg.r_max, 1.5 * rho))
    if bracket is None:
        bracket = _dirichlet_bracket(nl, n, rho, j, cfg)
    a, b = sorted(float(x) for x in bracket)
    za, _ = dirichlet_zero(nl, n, a, j, cfg)
    zb, _ = dirichlet_zero(nl, n, b, j, cfg)
    if not (math.isfinite(za) and math.isfinite(zb)):
        raise ShootingError(f"Z_{j} not reached within r_max={cfg.r_max}", a if not math.isfinite(za) else b)
    ga, gb = za - rho, zb - rho
    if abs(zb - za) <= 1e-9 * rho:
        if abs(ga) <= tol * rho * 10 and abs(gb) <= tol * rho * 10:
            mid = 0.5 * (a + b)
            z, traj = dirichlet_zero(nl, n, mid, j, cfg)
            zeros = [e.r for e in traj.events_of("u-zero")]
            return DirichletSolution(rho, k, mid, zeros, abs(traj.value(rho, 0)) if rho <= traj.r_end else math.nan,
                                     (a, b), degenerate=True, trajectory=traj)
        raise ShootingError(f"Z_{j} is flat in alpha over [{a}, {b}] and misses rho", a)
    if ga * gb > 0:
        raise ShootingError(f"bracket [{a}, {b}] does not straddle rho: Z_{j} = {za}, {zb}", a)
    mid, zm = a, za
    for _ in range(200):
        mid = 0.5 * (a + b)
        zm, _ = dirichlet_zero(nl, n, mid, j, cfg)
        gm = zm - rho
        if abs(gm) <= tol * rho or b - a <= 4e-16 * abs(mid):
            break
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b, gb = mid, gm
    z, traj = dirichlet_zero(nl, n, mid, j, cfg)
    zeros = [e.r for e in traj.events_of("u-zero")]
    resid = abs(traj.value(min(rho, traj.r_end), 0))
    return DirichletSolution(rho, k, mid, zeros, resid, (a, b), trajectory=traj)


def _dirichlet_bracket(nl, n, rho, j, cfg, steps=80):
    a = 1.0
    za, _ = dirichlet_zero(nl, n, a, j, cfg)
    direction = 2.0 if za < rho else 0.5
    for _ in range(steps):
        b = a * direction
        zb, _ = dirichlet_zero(nl, n, b, j, cfg)
        if (za - rho) * (zb - rho) <= 0:
            return (a, b)
        if abs(zb - za) <= 1e-12 * rho:
            return (a, b)  # flat: let the caller report degeneracy
        a, za = b, zb
    raise ShootingError(f"could not bracket Z_{j} = {rho}")
