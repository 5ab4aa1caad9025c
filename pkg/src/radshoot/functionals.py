"""Comparison functionals along inverted monotone branches.

Between consecutive extremal points a shot ``u`` is strictly monotone, so it
can be parametrized by its own value ``s``: ``r(s)`` on descending pieces,
``rbar(s)`` on ascending ones, with ``r'(s) = 1/u'(r(s))``. Every functional
here is evaluated on such an inverse. Closed-form ``s``-derivatives are
attached to each trace so identities can be checked against finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .nonlinearity import Nonlinearity, adaptive_simpson
from .radial_ode import Trajectory

__all__ = [
    "Branch",
    "FunctionalTrace",
    "DomainError",
    "extract_branches",
    "trace_W",
    "trace_Wtilde",
    "H_of",
    "trace_Q",
    "trace_P",
    "trace_Pbar",
    "trace_S12",
    "dirichlet_P_of_r",
    "sep4_h",
]

TAGS = ("I", "W", "Wtilde", "Q", "H", "P", "Pbar", "S12", "S12bar", "dirichletP")


class DomainError(ValueError):
    """A grid point lies outside the admissible set of a functional."""


@dataclass(frozen=True)
class Branch:
    """Monotone piece of a trajectory between two extremal points.

    ``index`` is i for the piece on (T_{i-1}, T_i); a terminal piece that
    ends at the horizon or a classifier stop has ``complete=False``.
    """

    traj: Trajectory = field(repr=False)
    index: int
    orientation: str  # "decreasing" | "increasing"
    r_lo: float
    r_hi: float
    complete: bool = True

    @property
    def s_start(self) -> float:
        return self.traj.value(self.r_lo, 0)

    @property
    def s_end(self) -> float:
        return self.traj.value(self.r_hi, 0)

    @property
    def s_lo(self) -> float:
        return min(self.s_start, self.s_end)

    @property
    def s_hi(self) -> float:
        return max(self.s_start, self.s_end)

    @property
    def decreasing(self) -> bool:
        return self.orientation == "decreasing"

    def contains(self, s: float) -> bool:
        return self.s_lo <= s <= self.s_hi

    def r_of(self, s: float) -> float:
        """Solve ``u(r) = s`` on the branch to 1e-12 relative in r."""
        t = self.traj
        lo, hi = self.s_lo, self.s_hi
        if s == self.s_start:
            return self.r_lo
        if s == self.s_end:
            return self.r_hi
        if not lo <= s <= hi:
            # event states and the interpolant agree only to ~1e-10 at extrema
            slack = 1e-9 * (1.0 + abs(s))
            if lo - slack <= s < lo:
                return self.r_lo if self.s_start == lo else self.r_hi
            if hi < s <= hi + slack:
                return self.r_lo if self.s_start == hi else self.r_hi
            raise DomainError(f"s={s!r} outside branch range [{lo!r}, {hi!r}]")
        return brentq(lambda r: t.value(r, 0) - s, self.r_lo, self.r_hi,
                      xtol=1e-300, rtol=1e-12, maxiter=200)

    def invert(self, s_grid) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``r(s)`` and ``u'(r(s))`` on ``s_grid``."""
        s = np.atleast_1d(np.asarray(s_grid, dtype=float))
        r = np.array([self.r_of(float(x)) for x in s])
        du = np.array([self.traj.value(float(x), 1) for x in r])
        return r, du

    def grid(self, lo: float | None = None, hi: float | None = None, count: int = 201,
             *, open_ends: bool = False) -> np.ndarray:
        """Uniform s-grid clipped to the branch range."""
        a = self.s_lo if lo is None else max(lo, self.s_lo)
        b = self.s_hi if hi is None else min(hi, self.s_hi)
        if not a < b:
            return np.empty(0)
        g = np.linspace(a, b, count + 2 if open_ends else count)
        return g[1:-1] if open_ends else g


def extract_branches(traj: Trajectory, beta: float | None = None,
                     min_length: float = 0.0) -> list[Branch]:
    """Split ``traj`` at its refined extremal points.

    The first piece starts at the series-start radius (standing in for
    T_0 = 0). A constant trajectory yields no branches. ``beta`` is accepted
    for symmetry with the functional domains and is not needed to split.
    """
    del beta
    u = traj.u
    if np.ptp(u) <= 1e-14 * (1.0 + abs(traj.alpha)) and not traj.events_of("du-zero"):
        return []
    cuts = [traj.r_start] + [e.r for e in traj.events_of("du-zero")]
    ends = cuts[1:] + [traj.r_end]
    out = []
    for i, (a, b) in enumerate(zip(cuts, ends), start=1):
        if not b > a or b - a <= min_length:
            continue
        mid_du = traj.value(0.5 * (a + b), 1)
        if mid_du == 0.0:
            continue
        out.append(Branch(traj, i, "decreasing" if mid_du < 0 else "increasing", a, b,
                          complete=i < len(cuts)))
    return out


@dataclass
class FunctionalTrace:
    tag: str
    s: np.ndarray
    r: np.ndarray
    du: np.ndarray
    values: np.ndarray
    derivative: np.ndarray | None = None  # closed-form d(value)/ds (or d/dr)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, header=None):
        from .io import write_rows

        meta = {"functional": self.tag, **self.meta}
        if header:
            meta = {**header, **meta} if isinstance(header, dict) else meta
        if self.tag == "dirichletP":
            return write_rows(path, ["r", "value"], zip(self.r, self.values), meta)
        return write_rows(path, ["s", "r", "du", "value"],
                          zip(self.s, self.r, self.du, self.values), meta)

    def fd_derivative(self) -> tuple[np.ndarray, np.ndarray]:
        """Centered finite difference on the interior grid (nonuniform safe)."""
        x = self.r if self.tag == "dirichletP" else self.s
        v = self.values
        d = (v[2:] - v[:-2]) / (x[2:] - x[:-2])
        return x[1:-1], d


def _meta(branch: Branch) -> dict:
    t = branch.traj
    return {"family": t.nl.spec, "n": t.n, "alpha": t.alpha, "branch": branch.index,
            "orientation": branch.orientation}


def _radicand(nl, s, du):
    rad = du ** 2 + 2.0 * np.array([nl.F(x) for x in s])
    if np.any(rad < -1e-14):
        i = int(np.argmin(rad))
        raise DomainError(f"(u')^2 + 2F(s) = {rad[i]:.3g} < 0 at s={s[i]!r}")
    return np.maximum(rad, 0.0)


def trace_W(branch: Branch, s_grid) -> FunctionalTrace:
    """W(s) = r(s) sqrt(u'(r(s))^2 + 2F(s))."""
    s = np.asarray(s_grid, dtype=float)
    r, du = branch.invert(s)
    rad = _radicand(branch.traj.nl, s, du)
    return FunctionalTrace("W", s, r, du, r * np.sqrt(rad), meta=_meta(branch))


def trace_Wtilde(branch: Branch, s_grid) -> FunctionalTrace:
    """r(s)^{n-1} sqrt(u'(r(s))^2 + 2F(s))."""
    s = np.asarray(s_grid, dtype=float)
    r, du = branch.invert(s)
    rad = _radicand(branch.traj.nl, s, du)
    n = branch.traj.n
    return FunctionalTrace("Wtilde", s, r, du, r ** (n - 1) * np.sqrt(rad), meta=_meta(branch))


def sep4_h(F: float, p, n: float):
    """h(p) = -2F/(p sqrt(p^2+2F)) + (n-2) p / sqrt(p^2+2F); decreasing in p for F <= 0."""
    p = np.asarray(p, dtype=float)
    root = np.sqrt(p * p + 2.0 * F)
    return -2.0 * F / (p * root) + (n - 2.0) * p / root


# ---------------------------------------------------------------------------
# H and the Q / P families


def _troy_antiderivative(t):
    # primitive of F/f = (t-1)/2 - 1/(4(t-1)) on t > 1, times 4
    return (t - 1.0) ** 2 - math.log(t - 1.0)


def _pd31_antiderivative(t):
    # power_diff(3,1): F/f = t(t^2-2)/(4(t^2-1)), times 4
    return 0.5 * t * t - 0.5 * math.log(t * t - 1.0)


@lru_cache(maxsize=64)
def _H_kernel(nl: Nonlinearity):
    """Return G with H(s) = -(n-2) * G(|s|) and G(beta) = 0."""
    beta = nl.beta
    if nl.tag == "troy":
        c = _troy_antiderivative(beta)
        return lambda t: _troy_antiderivative(t) - c
    if nl.tag == "pure_power":
        q = nl.param["q"]
        return lambda t: 2.0 * t * t / (q + 1.0)
    if nl.tag == "power_diff" and nl.param == {"p": 3.0, "q": 1.0}:
        c = _pd31_antiderivative(beta)
        return lambda t: _pd31_antiderivative(t) - c

    def G(t):
        return 4.0 * adaptive_simpson(nl.F_over_f, beta, t, tol=1e-12)

    return G


def H_of(nl: Nonlinearity, n: float, s) -> float | np.ndarray:
    """H(s) = -4(n-2) * integral_beta^|s| F/f, even in s, H(+-beta) = 0."""
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    a = np.abs(arr)
    if np.any(a < nl.beta * (1 - 1e-12)):
        raise DomainError(f"H is only traced for |s| >= beta={nl.beta!r}")
    if n == 2:
        out = np.zeros_like(a)
    else:
        G = _H_kernel(nl)
        out = -(n - 2.0) * np.array([G(max(x, nl.beta)) for x in a])
    return float(out[0]) if np.ndim(s) == 0 else out


def _check_outer(nl: Nonlinearity, s: np.ndarray):
    a = np.abs(s)
    if np.any(a < nl.beta * (1 - 1e-12)):
        raise DomainError(f"grid enters (-beta, beta) with beta={nl.beta!r}")
    if nl.b > 0 and np.any(np.abs(a - nl.b) < 1e-6 * nl.beta):
        raise DomainError("grid point inside the guard band at +-b")


def _ff(nl, s):
    return (np.array([nl.F_over_f(x) for x in s]), np.array([nl.F_over_f_prime(x) for x in s]),
            np.array([nl.F(x) for x in s]))


def trace_Q(branch: Branch, s_grid) -> FunctionalTrace:
    """Q = -4(F/f) r u' - r^2 u'^2 - 2 r^2 F + H on |s| >= beta.

    Uses r/r' = r u'. The attached derivative is (2(n-2) - 4(F/f)') r u'.
    """
    nl, n = branch.traj.nl, branch.traj.n
    s = np.asarray(s_grid, dtype=float)
    _check_outer(nl, s)
    r, du = branch.invert(s)
    q, qp, F = _ff(nl, s)
    val = -4.0 * q * r * du - (r * du) ** 2 - 2.0 * r * r * F + H_of(nl, n, s)
    deriv = (2.0 * (n - 2.0) - 4.0 * qp) * r * du
    tag = "Q"
    return FunctionalTrace(tag, s, r, du, val, deriv, meta=_meta(branch))


def _trace_P(branch: Branch, s_grid, tag: str) -> FunctionalTrace:
    nl, n = branch.traj.nl, branch.traj.n
    s = np.asarray(s_grid, dtype=float)
    _check_outer(nl, s)
    r, du = branch.invert(s)
    q, qp, F = _ff(nl, s)
    rn1 = r ** (n - 1.0)
    val = -2.0 * n * q * rn1 * du - r * rn1 * du * du - 2.0 * r * rn1 * F
    deriv = (n - 2.0 - 2.0 * n * qp) * rn1 * du
    return FunctionalTrace(tag, s, r, du, val, deriv, meta=_meta(branch))


def trace_P(branch: Branch, s_grid) -> FunctionalTrace:
    """P = -2n(F/f) r^{n-1} u' - r^n u'^2 - 2 r^n F on a descending branch."""
    if not branch.decreasing:
        raise DomainError("P is defined on descending branches; use trace_Pbar")
    return _trace_P(branch, s_grid, "P")


def trace_Pbar(branch: Branch, s_grid) -> FunctionalTrace:
    """Same expression as P, on an ascending branch."""
    if branch.decreasing:
        raise DomainError("Pbar is defined on ascending branches; use trace_P")
    return _trace_P(branch, s_grid, "Pbar")


def trace_S12(branch1: Branch, branch2: Branch, s_grid) -> FunctionalTrace:
    """S12 = r1^{n-1} u1' / (r2^{n-1} u2'), the ratio r1^{n-1} r2' / (r2^{n-1} r1').

    Derivative: S12 f(s) (1/u2'^2 - 1/u1'^2). Where u1' vanishes the value
    is its limit 0. ``r`` and ``du`` in the trace refer to branch1.
    """
    if branch1.orientation != branch2.orientation:
        raise DomainError("S12 needs branches of equal orientation")
    n = branch1.traj.n
    nl = branch1.traj.nl
    s = np.asarray(s_grid, dtype=float)
    r1, d1 = branch1.invert(s)
    r2, d2 = branch2.invert(s)
    interior = np.ones(len(s), bool)
    interior[[0, -1]] = False
    if np.any((d2 == 0.0) & interior):
        raise DomainError("u2' vanishes inside the grid")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(d1 == 0.0, 0.0, r1 ** (n - 1) * d1 / (r2 ** (n - 1) * d2))
        fs = np.array([nl.f(x) for x in s])
        deriv = val * fs * (1.0 / d2 ** 2 - 1.0 / d1 ** 2)
    tag = "S12" if branch1.decreasing else "S12bar"
    meta = _meta(branch1)
    meta["alpha2"] = branch2.traj.alpha
    return FunctionalTrace(tag, s, r1, d1, val, deriv, meta=meta)


def dirichlet_P_of_r(traj: Trajectory, r_grid, guard: float = 1e-6) -> FunctionalTrace:
    """P(r) = -2n(F/f)(u) r^{n-1} u' - r^n u'^2 - 2 r^n F(u) for b = 0 families.

    The attached derivative is dP/dr = (n-2-2n(F/f)'(u)) r^{n-1} u'^2.
    """
    nl, n = traj.nl, traj.n
    if nl.b != 0:
        raise DomainError("the r-parametrized P needs f(u) != 0 for u != 0 (b = 0)")
    r = np.asarray(r_grid, dtype=float)
    zs = np.array([e.r for e in traj.events_of("u-zero")])
    if zs.size and np.any(np.abs(r[:, None] - zs[None, :]) < guard * np.maximum(1.0, zs)):
        raise DomainError("r-grid enters the guard band around a zero of u")
    st = traj(r)
    u, du = st[:, 0], st[:, 1]
    q, qp, F = _ff(nl, u)
    rn1 = r ** (n - 1.0)
    val = -2.0 * n * q * rn1 * du - r * rn1 * du * du - 2.0 * r * rn1 * F
    deriv = (n - 2.0 - 2.0 * n * qp) * rn1 * du * du
    meta = {"family": nl.spec, "n": n, "alpha": traj.alpha}
    return FunctionalTrace("dirichletP", u, r, du, val, deriv, meta=meta)
