"""Odd nonlinearities f for the radial equation u'' + (n-1)/r u' + f(u) = 0.

Each :class:`Nonlinearity` bundles scalar evaluators for ``f``, ``f'`` and the
primitive ``F(s) = int_0^s f``, together with the landmarks ``b`` (first
positive zero of ``f``) and ``beta`` (positive zero of ``F``).

Built-in families::

    troy                 piecewise linear, b = 1, beta = 1 + sqrt(2)/2
    power_diff:p=..,q=.. f(s) = s^p - s^q, p > q > 0, b = 1
    pure_power:q=..      f(s) = s^q, 0 < q <= 1, b = beta = 0

The grammar above is also what :func:`parse_family` accepts.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

__all__ = [
    "Nonlinearity",
    "HypothesisReport",
    "Verdict",
    "FamilyError",
    "make_family",
    "make_custom",
    "parse_family",
    "find_beta",
    "find_b",
    "check_hypotheses",
    "adaptive_simpson",
    "HYPOTHESES",
]

HYPOTHESES = ("f1", "f2", "f3", "f4", "f4p", "f5", "f6", "f1p", "f2p", "f3p", "f3p_strict")


class FamilyError(ValueError):
    """Unknown family tag or parameters outside the family's domain."""


# ---------------------------------------------------------------------------
# built-in evaluators (module level so Nonlinearity instances pickle)


def _troy_f(s):
    a = abs(s)
    g = -a if a < 0.5 else a - 1.0
    return g if s >= 0.0 else -g


def _troy_fprime(s):
    return -1.0 if abs(s) < 0.5 else 1.0


def _troy_F(s):
    a = abs(s)
    if a <= 0.5:
        return -0.5 * a * a
    return 0.5 * (a - 1.0) ** 2 - 0.25


def _power_f(s, p, q):
    a = abs(s)
    g = a**p - a**q
    return g if s >= 0.0 else -g


def _power_fprime(s, p, q):
    a = abs(s)
    if a == 0.0:
        # near 0 the s^q term dominates since q < p
        if q < 1.0:
            return -math.inf
        return -1.0 if q == 1.0 else 0.0
    return p * a ** (p - 1.0) - q * a ** (q - 1.0)


def _power_F(s, p, q):
    a = abs(s)
    return a ** (p + 1.0) / (p + 1.0) - a ** (q + 1.0) / (q + 1.0)


def _pure_f(s, q):
    g = abs(s) ** q
    return g if s >= 0.0 else -g


def _pure_fprime(s, q):
    a = abs(s)
    if a == 0.0:
        return math.inf if q < 1.0 else 1.0
    return q * a ** (q - 1.0)


def _pure_F(s, q):
    return abs(s) ** (q + 1.0) / (q + 1.0)


# ---------------------------------------------------------------------------


def adaptive_simpson(g: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-12, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature of ``g`` on ``[a, b]`` to absolute ``tol``."""
    if a == b:
        return 0.0
    fa, fb = g(a), g(b)
    m = 0.5 * (a + b)
    fm = g(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    floor = 64.0 * np.finfo(float).eps * abs(whole)  # rounding level near endpoint singularities

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = g(lm), g(rm)
        left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
        right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
        delta = left + right - whole
        if depth <= 0:
            raise ArithmeticError(f"adaptive Simpson did not converge on [{a}, {b}]")
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        half = max(0.5 * tol, floor)
        return (rec(a, m, fa, flm, fm, left, half, depth - 1)
                + rec(m, b, fm, frm, fb, right, half, depth - 1))

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


@dataclass(frozen=True)
class Nonlinearity:
    """An odd nonlinearity with its primitive and landmark values.

    Instances are immutable; evaluators are pure scalar functions.
    """

    tag: str
    params: tuple[tuple[str, float], ...]
    f: Callable[[float], float] = field(repr=False, compare=False)
    fprime: Callable[[float], float] = field(repr=False, compare=False)
    F: Callable[[float], float] = field(repr=False, compare=False)
    b: float = 0.0
    beta: float = 0.0
    kinks: tuple[float, ...] = ()  # |s| values where f' jumps

    @property
    def param(self) -> dict[str, float]:
        return dict(self.params)

    @property
    def spec(self) -> str:
        """Family text in the CLI grammar."""
        if not self.params:
            return self.tag
        return self.tag + ":" + ",".join(f"{k}={v:g}" for k, v in self.params)

    @property
    def singular_at_zero(self) -> bool:
        """True when f' is unbounded at 0 (integrable singularity)."""
        return not math.isfinite(self.fprime(0.0))

    def F_over_f(self, s: float) -> float:
        fs = self.f(s)
        if fs == 0.0 and s == 0.0:
            return 0.0  # F vanishes to higher order than f at the origin
        return self.F(s) / fs

    def F_over_f_prime(self, s: float) -> float:
        """(F/f)'(s) through the identity (f^2 - F f') / f^2."""
        if s == 0.0:
            s = 1e-7  # removable point; (F/f)' is even
        fs = self.f(s)
        return (fs * fs - self.F(s) * self.fprime(s)) / (fs * fs)


def make_family(tag: str, params: dict | None = None) -> Nonlinearity:
    """Build one of the built-in families.

    >>> make_family("troy").beta
    1.7071067811865475
    """
    params = dict(params or {})
    if tag == "troy":
        if params:
            raise FamilyError("troy takes no parameters")
        return Nonlinearity("troy", (), _troy_f, _troy_fprime, _troy_F,
                            b=1.0, beta=1.0 + math.sqrt(2.0) / 2.0, kinks=(0.5,))
    if tag == "power_diff":
        try:
            p, q = float(params.pop("p")), float(params.pop("q"))
        except KeyError as exc:
            raise FamilyError("power_diff requires p and q") from exc
        if params:
            raise FamilyError(f"unexpected parameters {sorted(params)}")
        if not (p > q > 0.0):
            raise FamilyError(f"power_diff requires p > q > 0, got p={p}, q={q}")
        beta = ((p + 1.0) / (q + 1.0)) ** (1.0 / (p - q))
        return Nonlinearity("power_diff", (("p", p), ("q", q)),
                            functools.partial(_power_f, p=p, q=q),
                            functools.partial(_power_fprime, p=p, q=q),
                            functools.partial(_power_F, p=p, q=q),
                            b=1.0, beta=beta)
    if tag == "pure_power":
        try:
            q = float(params.pop("q"))
        except KeyError as exc:
            raise FamilyError("pure_power requires q") from exc
        if params:
            raise FamilyError(f"unexpected parameters {sorted(params)}")
        if not (0.0 < q <= 1.0):
            raise FamilyError(f"pure_power requires 0 < q <= 1, got q={q}")
        return Nonlinearity("pure_power", (("q", q),),
                            functools.partial(_pure_f, q=q),
                            functools.partial(_pure_fprime, q=q),
                            functools.partial(_pure_F, q=q),
                            b=0.0, beta=0.0)
    if tag == "custom":
        raise FamilyError("custom families are built with make_custom()")
    raise FamilyError(f"unknown family tag {tag!r}")


def make_custom(f: Callable[[float], float], fprime: Callable[[float], float],
                F: Callable[[float], float] | None = None, *,
                s_max: float = 1e3) -> Nonlinearity:
    """Wrap caller-supplied evaluators; F falls back to adaptive Simpson.

    ``f`` must already be odd. Landmarks are located numerically.
    """
    if F is None:
        def F(s, _f=f):
            a = abs(s)
            return adaptive_simpson(_f, 0.0, a, tol=1e-12)
    b = find_b(f, s_max)
    probe = Nonlinearity("custom", (), f, fprime, F, b=b, beta=0.0)
    beta = find_beta(probe, max(2.0 * b, 1.0))
    return Nonlinearity("custom", (), f, fprime, F, b=b, beta=beta)


def parse_family(text: str) -> Nonlinearity:
    """Parse ``troy``, ``power_diff:p=3,q=1`` or ``pure_power:q=0.5``."""
    text = text.strip()
    tag, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise FamilyError(f"malformed parameter {item!r} in {text!r}")
            try:
                params[key.strip()] = float(val)
            except ValueError as exc:
                raise FamilyError(f"non-numeric parameter {item!r}") from exc
    return make_family(tag.strip(), params)


def find_b(f: Callable[[float], float], s_max: float = 1e3, count: int = 4096) -> float:
    """Last sign change of f from non-positive to positive on (0, s_max]."""
    grid = np.geomspace(1e-9, s_max, count)
    vals = np.array([f(s) for s in grid])
    if np.all(vals > 0):
        return 0.0
    idx = np.nonzero(vals <= 0)[0][-1]
    if idx + 1 >= len(grid):
        raise FamilyError("f is not eventually positive below s_max")
    lo, hi = grid[idx], grid[idx + 1]
    if vals[idx] == 0:
        return float(lo)
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def find_beta(nl: Nonlinearity, s_max_initial: float = 2.0, *, cap: float = 1e12) -> float:
    """Unique zero of F in (b, inf); 0 when b = 0.

    The upper end of the bracket grows geometrically from ``s_max_initial``
    until F changes sign, then Brent's method refines to relative 1e-15.
    """
    if nl.b == 0.0:
        return 0.0
    lo = nl.b
    if not nl.F(lo) < 0:
        raise FamilyError(f"F(b) = {nl.F(lo)} is not negative")
    hi = max(s_max_initial, 1.5 * nl.b)
    while nl.F(hi) <= 0.0:
        lo = hi
        hi *= 2.0
        if hi > cap:
            raise FamilyError(f"F stays non-positive up to s = {cap:g}")
    return optimize.brentq(nl.F, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class Verdict:
    status: str  # "pass" | "fail" | "not-applicable"
    margin: float = math.nan
    at: float = math.nan
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class HypothesisReport:
    family: str
    n: float
    s_max: float
    grid_count: int
    verdicts: dict[str, Verdict]

    def __getitem__(self, name: str) -> Verdict:
        return self.verdicts[name]

    def holds(self, *names: str) -> bool:
        return all(self.verdicts[k].passed for k in names)

    def lines(self) -> list[str]:
        out = [f"# family={self.family} n={self.n:g} s_max={self.s_max:g} grid={self.grid_count}"]
        for k in HYPOTHESES:
            v = self.verdicts[k]
            out.append(f"{k:<11s} {v.status:<15s} margin={v.margin:.6e} at={v.at:.6e}"
                       + (f"  ({v.note})" if v.note else ""))
        return out


def _worst(slack: np.ndarray, pts: np.ndarray, tol: float) -> Verdict:
    if slack.size == 0:
        return Verdict("not-applicable", note="empty grid")
    i = int(np.argmin(slack))
    status = "fail" if slack[i] < -tol else "pass"
    return Verdict(status, float(slack[i]), float(pts[i]))


def _l1_near_zero(fprime: Callable[[float], float], levels: int = 40) -> Verdict:
    # integral of |f'| on dyadic shells [2^-j-1, 2^-j]; converge iff the tail dies off
    pieces = []
    for j in range(levels):
        a, b = 2.0 ** (-j - 1), 2.0 ** (-j)
        pieces.append(adaptive_simpson(lambda t: abs(fprime(t)), a, b, tol=1e-13))
    pieces = np.array(pieces)
    total = pieces.sum()
    tail = pieces[-5:].sum()
    ratio = pieces[-1] / pieces[-2] if pieces[-2] > 0 else 0.0
    ok = tail <= 1e-6 * max(total, 1.0) or (ratio < 0.99 and pieces[-1] <= 1e-3 * max(total, 1.0))
    return Verdict("pass" if ok else "fail", float(1e-6 * max(total, 1.0) - tail), 2.0 ** (-levels),
                   note=f"int_eps^1 |f'| ~ {total:.6g}")


def check_hypotheses(nl: Nonlinearity, n: float, s_max: float = 10.0, grid_count: int = 2000,
                     *, tol: float = 1e-10) -> HypothesisReport:
    """Grid-sample every structural hypothesis on f at dimension ``n``.

    A verdict fails iff some grid point violates its inequality by more than
    ``tol``; the margin is the smallest slack seen and ``at`` its location.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if grid_count < 100:
        raise ValueError("grid_count must be >= 100")
    if s_max <= nl.beta:
        raise ValueError("s_max must exceed beta")
    b, beta = nl.b, nl.beta
    s = np.linspace(s_max / grid_count, s_max, grid_count)
    fv = np.array([nl.f(x) for x in s])
    fpv = np.array([nl.fprime(x) for x in s])
    Fv = np.array([nl.F(x) for x in s])
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(fpv)) and np.all(np.isfinite(Fv))):
        raise FloatingPointError("non-finite evaluator value on the grid")
    guard = np.abs(s - b) >= 1e-6 * s_max
    v: dict[str, Verdict] = {}

    # (f1)
    odd = np.array([nl.f(-x) + nl.f(x) for x in s])
    above = (s > b) & guard
    below = s <= b
    slacks = [-np.abs(odd), fv[above]]
    if below.any():
        slacks.append(-fv[below])
    pts = [s, s[above]] + ([s[below]] if below.any() else [])
    f1 = _worst(np.concatenate(slacks), np.concatenate(pts), tol)
    reasons = []
    if nl.f(0.0) != 0.0:
        reasons.append("f(0) != 0")
    if not (beta > b > 0):
        reasons.append("needs beta > b > 0")
    elif not np.any(fv[below] < 0):
        reasons.append("f vanishes identically on [0, b]")
    if b > 0 and abs(nl.F(beta)) > tol:
        reasons.append("F(beta) != 0")
    if reasons:
        f1 = Verdict("fail", f1.margin, f1.at, note="; ".join(reasons))
    v["f1"] = f1

    # (f2) and (f2'): continuity, C1 on (0, inf), f' in L1(0, 1)
    f2 = _l1_near_zero(nl.fprime)
    v["f2"] = f2
    v["f2p"] = f2

    ffp = (fv * fv - Fv * fpv) / (fv * fv)
    tail = (s >= beta) & guard
    tail_open = (s > beta) & guard

    # (f3): f(s) >= f'(s)(s - beta), s >= beta
    v["f3"] = _worst((fv - fpv * (s - beta))[tail], s[tail], tol)
    # (f4), (f4'): (F/f)' >= (n-2)/(2n) resp. (n-2)/2 for s > beta
    v["f4"] = _worst(ffp[tail_open] - (n - 2.0) / (2.0 * n), s[tail_open], tol)
    v["f4p"] = _worst(ffp[tail_open] - (n - 2.0) / 2.0, s[tail_open], tol)
    # (f5): s f'/f non-increasing on [beta, inf)
    g = (s * fpv / fv)[tail]
    if g.size >= 2:
        v["f5"] = _worst(g[:-1] - g[1:], s[tail][1:], tol)
    else:
        v["f5"] = Verdict("not-applicable", note="grid too short")
    # (f6): beta f'(beta)/f(beta) <= n/(n-2), n > 2
    if n <= 2:
        v["f6"] = Verdict("not-applicable", note="requires n > 2")
    elif nl.f(beta) == 0.0:
        v["f6"] = Verdict("not-applicable", note="f(beta) = 0")
    else:
        val = beta * nl.fprime(beta) / nl.f(beta)
        slack = n / (n - 2.0) - val
        v["f6"] = Verdict("pass" if slack >= -tol else "fail", slack, beta)

    # (f1'): f(0) = 0, s f(s) > 0 for s > 0
    f1p = _worst(s * fv, s, 0.0)
    if f1p.status == "pass" and np.any(s * fv <= 0):
        f1p = Verdict("fail", f1p.margin, f1p.at)
    if nl.f(0.0) != 0.0:
        f1p = Verdict("fail", f1p.margin, 0.0, note="f(0) != 0")
    v["f1p"] = f1p
    # (f3'): f(s) >= s f'(s) for s > 0, strict somewhere near 0
    pos = guard | (b == 0.0)
    v["f3p"] = _worst((fv - s * fpv)[pos], s[pos], tol)
    small = 2.0 ** -np.arange(10, 60, dtype=float)
    strict = np.array([nl.f(x) - x * nl.fprime(x) for x in small])
    rel = strict / np.maximum(np.abs([nl.f(x) for x in small]), 1e-300)
    j = int(np.argmax(rel))
    if nl.tag == "pure_power" and nl.param["q"] == 1.0:
        v["f3p_strict"] = Verdict("not-applicable", float(rel[j]), float(small[j]),
                                  note="linear f, calibration family only")
    else:
        v["f3p_strict"] = Verdict("pass" if rel[j] > 1e-12 else "fail", float(rel[j]), float(small[j]))
    return HypothesisReport(nl.spec, float(n), float(s_max), int(grid_count), v)
