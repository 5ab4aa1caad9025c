"""Radial initial value problem with its variational equation.

State vector ``(u, u', phi, phi')`` where ``phi = du/dalpha`` solves

    u''   + (n-1)/r u'   + f(u)       = 0,   u(0) = alpha,  u'(0) = 0
    phi'' + (n-1)/r phi' + f'(u) phi  = 0,   phi(0) = 1,    phi'(0) = 0

The singular origin is avoided by a Taylor start at a small radius ``r0``.
Stepping is Dormand-Prince 5(4) with cubic Hermite dense output; sign changes
of u, u', phi and of the energy I = u'^2 + 2F(u) are logged as refined events.

When f' is unbounded at 0 the phi' equation is integrated through u-zeros in
the variable Psi = phi' + f(u) phi / u', whose right-hand side stays bounded.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .nonlinearity import Nonlinearity

__all__ = [
    "ProblemConfig",
    "Event",
    "Trajectory",
    "IntegrationError",
    "series_start",
    "integrate",
    "eval_I",
    "EVENT_KINDS",
]

EVENT_KINDS = ("u-zero", "du-zero", "phi-zero", "I-zero")
_COMPONENT = {"u-zero": 0, "du-zero": 1, "phi-zero": 2}

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)

# crossing mode engages when the zero of u is closer than this many r-units
_CROSSING_REACH = 0.05


class IntegrationError(ArithmeticError):
    """Non-finite state or invalid problem setup."""


@dataclass(frozen=True)
class ProblemConfig:
    """Integration setup for one shot ``u(0) = alpha`` in dimension ``n``."""

    n: float
    alpha: float
    r_max: float = 50.0
    rtol: float = 1e-10
    atol: float = 1e-12
    event_tol: float = 1e-11
    r0: float | None = None
    with_phi: bool = True
    h_max: float = 0.25

    def __post_init__(self):
        if not self.n >= 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not (self.rtol > 0 and self.atol > 0 and self.event_tol > 0 and self.h_max > 0):
            raise ValueError("tolerances must be positive")
        if self.r0 is not None and not (0 < self.r0 < self.r_max):
            raise ValueError("need 0 < r0 < r_max")

    def start_radius(self, nl: Nonlinearity) -> float:
        if self.r0 is not None:
            return self.r0
        fa = nl.f(self.alpha)
        return 1e-6 * max(1.0, 1.0 / math.sqrt(1.0 + abs(fa)))

    def tightened(self, factor: float = 10.0, horizon: float = 2.0) -> "ProblemConfig":
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor,
                       r_max=self.r_max * horizon)


@dataclass(frozen=True)
class Event:
    kind: str
    r: float
    state: tuple[float, float, float, float]
    direction: int  # +1 when the quantity increases through zero

    @property
    def u(self) -> float:
        return self.state[0]

    @property
    def du(self) -> float:
        return self.state[1]

    @property
    def phi(self) -> float:
        return self.state[2]

    @property
    def dphi(self) -> float:
        return self.state[3]


def series_start(nl: Nonlinearity, n: float, alpha: float, r0: float) -> tuple[float, float, float, float]:
    """Second-order Taylor state at ``r0`` from u''(0) = -f(alpha)/n."""
    fa, fpa = nl.f(alpha), nl.fprime(alpha)
    if not (math.isfinite(fa) and math.isfinite(fpa)):
        raise IntegrationError(f"f or f' not finite at alpha={alpha}")
    return (alpha - fa * r0 * r0 / (2.0 * n), -fa * r0 / n,
            1.0 - fpa * r0 * r0 / (2.0 * n), -fpa * r0 / n)


# ---------------------------------------------------------------------------
# right-hand sides


def _make_rhs(nl: Nonlinearity, n: float, with_phi: bool):
    f, fp = nl.f, nl.fprime
    c = n - 1.0

    if not with_phi:
        def rhs(r, y):
            v = y[1]
            return [v, -c / r * v - f(y[0]), 0.0, 0.0]
        return rhs

    def rhs(r, y):
        u, v, p, q = y
        cr = c / r
        return [v, -cr * v - f(u), q, -cr * q - fp(u) * p]
    return rhs


def _make_crossing_rhs(nl: Nonlinearity, n: float):
    # y = (u, v, phi, Psi) with Psi = phi' + f(u) phi / v
    f = nl.f
    c = n - 1.0

    def rhs(r, y):
        u, v, p, big = y
        fu = f(u)
        cr = c / r
        dv = -cr * v - fu
        q = big - fu * p / v
        return [v, dv, q, -cr * q + fu * q / v - fu * p * dv / (v * v)]
    return rhs


def _to_crossing(nl, y):
    u, v, p, q = y
    return [u, v, p, q + nl.f(u) * p / v]


def _from_crossing(nl, y):
    u, v, p, big = y
    return [u, v, p, big - nl.f(u) * p / v]


def _dp5(rhs, r, y, k1, h):
    """One Dormand-Prince step; returns (y_new, k7, error vector)."""
    k2 = rhs(r + C2 * h, [yi + h * A21 * a for yi, a in zip(y, k1)])
    k3 = rhs(r + C3 * h, [yi + h * (A31 * a + A32 * b) for yi, a, b in zip(y, k1, k2)])
    k4 = rhs(r + C4 * h, [yi + h * (A41 * a + A42 * b + A43 * c)
                          for yi, a, b, c in zip(y, k1, k2, k3)])
    k5 = rhs(r + C5 * h, [yi + h * (A51 * a + A52 * b + A53 * c + A54 * d)
                          for yi, a, b, c, d in zip(y, k1, k2, k3, k4)])
    k6 = rhs(r + h, [yi + h * (A61 * a + A62 * b + A63 * c + A64 * d + A65 * e)
                     for yi, a, b, c, d, e in zip(y, k1, k2, k3, k4, k5)])
    yn = [yi + h * (B1 * a + B3 * c + B4 * d + B5 * e + B6 * g)
          for yi, a, c, d, e, g in zip(y, k1, k3, k4, k5, k6)]
    k7 = rhs(r + h, yn)
    err = [h * (E1 * a + E3 * c + E4 * d + E5 * e + E6 * g + E7 * k)
           for a, c, d, e, g, k in zip(k1, k3, k4, k5, k6, k7)]
    return yn, k7, err


# ---------------------------------------------------------------------------
# Hermite helpers


def _hermite(t, h, y0, d0, y1, d1):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)


def _hermite_d(t, h, y0, d0, y1, d1):
    t2 = t * t
    return ((6 * t2 - 6 * t) * (y0 - y1) / h + (3 * t2 - 4 * t + 1) * d0
            + (3 * t2 - 2 * t) * d1)


class Trajectory:
    """Accepted nodes, Hermite dense output and the refined event log.

    Parameters are filled in by :func:`integrate`; the object is treated as
    immutable afterwards. Calling the trajectory evaluates the state at any
    radius in ``[r[0], r[-1]]``.
    """

    def __init__(self, nl, config, r, y, dy, events, termination):
        self.nl = nl
        self.config = config
        self.n = config.n
        self.alpha = config.alpha
        self.r = np.asarray(r, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.dy = np.asarray(dy, dtype=float)
        self.events: tuple[Event, ...] = tuple(events)
        self.termination = termination
        for a in (self.r, self.y, self.dy):
            a.setflags(write=False)

    def __repr__(self):
        return (f"Trajectory({self.nl.spec}, n={self.n:g}, alpha={self.alpha!r}, "
                f"nodes={len(self.r)}, r_end={self.r[-1]:.6g}, {self.termination})")

    # -- nodes
    @property
    def r_start(self) -> float:
        return float(self.r[0])

    @property
    def r_end(self) -> float:
        return float(self.r[-1])

    @property
    def u(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def du(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def phi(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def dphi(self) -> np.ndarray:
        return self.y[:, 3]

    @property
    def I(self) -> np.ndarray:
        F = self.nl.F
        return self.du ** 2 + 2.0 * np.array([F(x) for x in self.u])

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    # -- dense output
    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.r[0], self.r[-1]
        span = hi - lo
        if np.any(r < lo - 1e-12 * span) or np.any(r > hi + 1e-12 * span):
            raise ValueError(f"r outside trajectory range [{lo}, {hi}]")
        r = np.clip(r, lo, hi)
        i = np.clip(np.searchsorted(self.r, r, side="right") - 1, 0, len(self.r) - 2)
        return r, i

    def __call__(self, r, derivative: bool = False) -> np.ndarray:
        """State ``(u, u', phi, phi')`` at ``r`` (scalar or array).

        With ``derivative=True`` returns the derivative of the interpolant.
        """
        r, i = self._locate(r)
        r0, r1 = self.r[i], self.r[i + 1]
        h = r1 - r0
        t = ((r - r0) / h)[..., None]
        hh = h[..., None]
        args = (t, hh, self.y[i], self.dy[i], self.y[i + 1], self.dy[i + 1])
        return _hermite_d(*args) if derivative else _hermite(*args)

    def value(self, r: float, comp: int) -> float:
        """Scalar fast path for one component."""
        i = bisect.bisect_right(self.r, r) - 1
        i = min(max(i, 0), len(self.r) - 2)
        r0, r1 = self.r[i], self.r[i + 1]
        h = r1 - r0
        return float(_hermite((r - r0) / h, h, self.y[i, comp], self.dy[i, comp],
                              self.y[i + 1, comp], self.dy[i + 1, comp]))

    def I_at(self, r) -> np.ndarray:
        s = self(r)
        F = self.nl.F
        uu = np.atleast_1d(s[..., 0])
        val = s[..., 1] ** 2 + 2.0 * np.array([F(x) for x in uu]).reshape(np.shape(s[..., 0]))
        return val

    # -- export
    def to_csv(self, path, header: str = "") -> None:
        """Write ``r,u,du,phi,dphi,I`` at the accepted nodes."""
        from .io import write_table
        cols = np.column_stack([self.r, self.y, self.I])
        write_table(path, ["r", "u", "du", "phi", "dphi", "I"], cols, header)

    def events_to_csv(self, path, header: str = "") -> None:
        from .io import write_rows
        rows = [[e.kind, e.r, *e.state] for e in self.events]
        write_rows(path, ["kind", "r", "u", "du", "phi", "dphi"], rows, header)


def eval_I(traj: Trajectory, r) -> float | np.ndarray:
    """Energy (u')^2 + 2F(u) from dense output."""
    val = traj.I_at(r)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------


StopPredicate = Callable[[float, Sequence[float], Sequence[Event]], object]


class _Stepper:
    def __init__(self, nl: Nonlinearity, cfg: ProblemConfig):
        self.nl = nl
        self.cfg = cfg
        self.rhs = _make_rhs(nl, cfg.n, cfg.with_phi)
        self.crossing = cfg.with_phi and nl.singular_at_zero
        self.xrhs = _make_crossing_rhs(nl, cfg.n) if self.crossing else None
        self.ncomp = 4 if cfg.with_phi else 2

    def use_crossing(self, y) -> bool:
        return self.crossing and y[1] != 0.0 and abs(y[0]) < _CROSSING_REACH * abs(y[1])

    def derivative(self, r, y):
        d = self.rhs(r, y)
        if not math.isfinite(d[3]):
            d[3] = 0.0  # u == 0 exactly with singular f'; value only feeds the interpolant
        return d

    def advance(self, r, y, h, mode):
        """Single DP5 step in the requested variables; standard state in/out."""
        if mode:
            yc = _to_crossing(self.nl, y)
            yn, _, err = _dp5(self.xrhs, r, yc, self.xrhs(r, yc), h)
            return _from_crossing(self.nl, yn), err
        yn, _, err = _dp5(self.rhs, r, y, self.rhs(r, y), h)
        return yn, err

    def error_norm(self, y, yn, err):
        rtol, atol = self.cfg.rtol, self.cfg.atol
        worst = 0.0
        for i in range(self.ncomp):
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            e = abs(err[i]) / sc
            if e > worst:
                worst = e
        return worst


def _sign(x):
    return (x > 0) - (x < 0)


def integrate(nl: Nonlinearity, config: ProblemConfig, stop: StopPredicate | None = None) -> Trajectory:
    """Integrate the shot ``u(0) = alpha`` from the Taylor start to ``r_max``.

    ``stop(r, state, new_events)`` is evaluated after every accepted step; a
    truthy return ends the integration with termination ``classifier-stop``.
    Step underflow (h < 1e-14 r) ends it with ``step-underflow``.
    """
    cfg = config
    st = _Stepper(nl, cfg)
    F = nl.F
    r = cfg.start_radius(nl)
    if not r < cfg.r_max:
        raise IntegrationError("r_max must exceed the start radius")
    y = list(series_start(nl, cfg.n, cfg.alpha, r))
    if not cfg.with_phi:
        y[2] = y[3] = 0.0
    dy = st.derivative(r, y)
    rs, ys, dys = [r], [tuple(y)], [tuple(dy)]
    events: list[Event] = []
    I_old = y[1] ** 2 + 2.0 * F(y[0])
    h = min(r, cfg.h_max)
    termination = "horizon"
    mode = st.use_crossing(y)
    k1 = st.xrhs(r, _to_crossing(nl, y)) if mode else dy

    while r < cfg.r_max:
        h = min(h, cfg.h_max, cfg.r_max - r)
        if h < 1e-14 * r:
            termination = "step-underflow"
            break
        if mode:
            yc = _to_crossing(nl, y)
            ycn, k7, err = _dp5(st.xrhs, r, yc, k1, h)
            yn = _from_crossing(nl, ycn)
            enorm = st.error_norm(yc, ycn, err)
        else:
            yn, k7, err = _dp5(st.rhs, r, y, k1, h)
            enorm = st.error_norm(y, yn, err)
        if not math.isfinite(enorm):
            h *= 0.2
            continue
        if enorm > 1.0:
            h *= max(0.2, 0.9 * enorm ** -0.2)
            continue

        rn = r + h if r + h < cfg.r_max or cfg.r_max - (r + h) > 1e-14 * cfg.r_max else cfg.r_max
        if not all(math.isfinite(x) for x in yn):
            raise IntegrationError(f"non-finite state at r={rn}")
        dyn = st.derivative(rn, yn)
        I_new = yn[1] ** 2 + 2.0 * F(yn[0])

        new_events = _detect(st, r, y, dy, I_old, rn, yn, dyn, I_new, mode)
        events.extend(new_events)

        r, y, dy, I_old = rn, yn, dyn, I_new
        rs.append(r)
        ys.append(tuple(y))
        dys.append(tuple(dy))

        h *= 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))

        new_mode = st.use_crossing(y)
        if new_mode == mode:
            k1 = k7
        elif new_mode:
            k1 = st.xrhs(r, _to_crossing(nl, y))
        else:
            k1 = dy
        mode = new_mode

        if stop is not None and stop(r, y, new_events):
            termination = "classifier-stop"
            break

    return Trajectory(nl, cfg, rs, ys, dys, events, termination)


def _detect(st: _Stepper, ra, ya, da, Ia, rb, yb, db, Ib, mode) -> list[Event]:
    found = []
    kinds = ["u-zero", "du-zero"] + (["phi-zero"] if st.cfg.with_phi else [])
    for kind in kinds:
        c = _COMPONENT[kind]
        sa, sb = _sign(ya[c]), _sign(yb[c])
        if sa != 0 and sa != sb:
            found.append(_refine(st, kind, ra, ya, da, rb, yb, db, sa, mode))
    sa, sb = _sign(Ia), _sign(Ib)
    if sa != 0 and sa != sb:
        found.append(_refine(st, "I-zero", ra, ya, da, rb, yb, db, sa, mode))
    found.sort(key=lambda e: e.r)
    return found


def _refine(st: _Stepper, kind, ra, ya, da, rb, yb, db, sa, mode) -> Event:
    """Bisection on the interpolant, then one Newton polish on a fresh step."""
    nl, cfg = st.nl, st.cfg
    h = rb - ra
    F = nl.F
    if kind == "I-zero":
        def g(r):
            t = (r - ra) / h
            uu = _hermite(t, h, ya[0], da[0], yb[0], db[0])
            vv = _hermite(t, h, ya[1], da[1], yb[1], db[1])
            return vv * vv + 2.0 * F(uu)
    else:
        c = _COMPONENT[kind]

        def g(r):
            return _hermite((r - ra) / h, h, ya[c], da[c], yb[c], db[c])

    lo, hi = ra, rb
    tol = cfg.event_tol * rb
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if _sign(gm) == sa:
            lo = mid
        else:
            hi = mid
        if mid == lo == hi:
            break
    re = 0.5 * (lo + hi)

    ye, _ = st.advance(ra, ya, re - ra, mode)
    de = st.rhs(re, ye)
    if kind == "u-zero":
        gv, gd = ye[0], ye[1]
    elif kind == "du-zero":
        gv, gd = ye[1], de[1]
    elif kind == "phi-zero":
        gv, gd = ye[2], ye[3]
    else:
        gv = ye[1] ** 2 + 2.0 * F(ye[0])
        gd = -2.0 * (cfg.n - 1.0) * ye[1] ** 2 / re
    if gd != 0.0 and math.isfinite(gd):
        rn = re - gv / gd
        if ra < rn < rb and abs(rn - re) <= 1e-2 * h:
            yn, _ = st.advance(ra, ya, rn - ra, mode)
            re, ye = rn, yn
    direction = -sa
    return Event(kind, float(re), tuple(float(x) for x in ye), direction)
