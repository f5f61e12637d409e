"""Optimal stopping of the discounted running maximum.

Solves sup_tau E[e^{-q tau} f(Xbar_tau, Jbar_tau)] for gains driven by
the running maximum of the additive component.  For the exponential gain
f(s, j) = e^s h_j the optimal drawdown boundary is constant per state and
solves u_j(x) = [Z^(q) 1]_j(x) - q [W^(q) 1]_j(x) <= 0 minimally; general
gains lead to a per-state first-order boundary equation integrated here
by Runge-Kutta with interpolated scale-function row sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BlowUp,
    BoundaryMissing,
    ConstraintViolation,
    DivisionNearZero,
    InvalidSolution,
    Unbounded,
    ValidationError,
)
from .model import MapModel, kappa
from .scale import (
    ScaleTable,
    SpectralRep,
    a_threshold,
    eval_w_one,
    eval_z_one,
    spectral_decompose,
    w_zero_plus,
)

__all__ = [
    "GainSpec",
    "StopSolution",
    "StateSolution",
    "BoundaryCurve",
    "u_fn",
    "solve_shepp",
    "value",
    "solve_boundary_ode",
    "regime_report",
    "RegimeReport",
    "StateRegime",
    "ZERO_BOUNDARY",
    "INTERIOR_ROOT",
    "NO_ROOT_ON_RANGE",
    "UNBOUNDED",
]

ZERO_BOUNDARY = "ZeroBoundary"
INTERIOR_ROOT = "InteriorRoot"
NO_ROOT_ON_RANGE = "NoRootOnRange"
UNBOUNDED = "Unbounded"

DIV_FLOOR = 1e-10


# --- gain functions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class GainSpec:
    """Gain f(s, j) on the running maximum and its modulator state.

    kind 'shepp':  f = e^s h_j  (f'/f = 1, defined for all s)
    kind 'capped': f = (e^{min(s, eps)} - K)^+ h_j, valid for s > log K
    kind 'custom': tabulated f and df/ds on an s-grid, linear interpolation
    """

    kind: str
    h: np.ndarray = None
    cap: float = None
    eps: float = None
    s_grid: np.ndarray = None
    f_table: np.ndarray = None
    fp_table: np.ndarray = None

    @staticmethod
    def shepp(h) -> "GainSpec":
        h = np.asarray(h, dtype=float)
        if (h <= 0).any():
            raise ValidationError("gain weights must be positive")
        return GainSpec(kind="shepp", h=h)

    @staticmethod
    def capped(h, cap, eps) -> "GainSpec":
        h = np.asarray(h, dtype=float)
        if (h <= 0).any():
            raise ValidationError("gain weights must be positive")
        cap = float(cap)
        eps = float(eps)
        if cap <= 0 or eps <= math.log(cap):
            raise ValidationError("capped gain needs K > 0 and eps > log K")
        return GainSpec(kind="capped", h=h, cap=cap, eps=eps)

    @staticmethod
    def custom(s_grid, f_table, fp_table) -> "GainSpec":
        s_grid = np.asarray(s_grid, dtype=float)
        f_table = np.asarray(f_table, dtype=float)
        fp_table = np.asarray(fp_table, dtype=float)
        if (f_table <= 0).any():
            raise ValidationError("custom gain must be positive on its grid")
        return GainSpec(
            kind="custom", s_grid=s_grid, f_table=f_table, fp_table=fp_table
        )

    @property
    def s_min(self):
        """Left end of the domain where f > 0."""
        if self.kind == "capped":
            return math.log(self.cap)
        if self.kind == "custom":
            return float(self.s_grid[0])
        return -math.inf

    def f(self, s, j):
        if self.kind == "shepp":
            return math.exp(s) * self.h[j]
        if self.kind == "capped":
            return max(math.exp(min(s, self.eps)) - self.cap, 0.0) * self.h[j]
        return float(np.interp(s, self.s_grid, self.f_table[:, j]))

    def f_prime(self, s, j):
        if self.kind == "shepp":
            return math.exp(s) * self.h[j]
        if self.kind == "capped":
            if s >= self.eps or s <= math.log(self.cap):
                return 0.0
            return math.exp(s) * self.h[j]
        return float(np.interp(s, self.s_grid, self.fp_table[:, j]))


# --- constant-boundary solver ------------------------------------------


def u_fn(rep: SpectralRep, j: int, x: float) -> float:
    """u_j(x) = [Z^(q)(x) 1]_j - q [W^(q)(x) 1]_j."""
    return float(eval_z_one(rep, x)[j] - rep.q * eval_w_one(rep, x)[j])


@dataclass(frozen=True)
class StateSolution:
    state: int
    regime: str
    c: float            # boundary, nan when no root was found on the range
    a: float            # threshold a(j), may be math.inf

    @property
    def has_boundary(self):
        return self.regime in (ZERO_BOUNDARY, INTERIOR_ROOT)


@dataclass(frozen=True, eq=False)
class StopSolution:
    """Per-state constant drawdown boundaries and their diagnostics."""

    q: float
    gain: GainSpec
    states: tuple
    rep: SpectralRep
    table: ScaleTable
    kappa1: float
    valid: bool

    def boundary(self, j) -> float:
        st = self.states[j]
        if not st.has_boundary:
            raise BoundaryMissing(
                f"state {j + 1} has no boundary on the scanned range ({st.regime})"
            )
        return st.c

    def value(self, x, s, i, j) -> float:
        """V(x, s, i, j) = f(s, j) [Z^(q)(x - s + c_j) 1]_i for x <= s."""
        x = float(x)
        s = float(s)
        if x > s + 1e-12:
            raise ValueError("requires x <= s")
        c = self.boundary(j)
        y = x - s + c
        zrow = 1.0 if y <= 0 else float(eval_z_one(self.rep, y)[i])
        return self.gain.f(s, j) * zrow


def value(sol: StopSolution, x, s, i, j) -> float:
    return sol.value(x, s, i, j)


def solve_shepp(model: MapModel, q: float, h=None, x_max: float = 5.0,
                step: float = 1e-3) -> StopSolution:
    """Constant boundaries c_j for the exponential maximum gain e^s h_j.

    The problem value is infinite unless q > kappa(1) (raises Unbounded
    otherwise).  Per state: c_j = 0 when [W 1]_j(0+) >= 1/q; otherwise the
    first sign change of u_j on the grid is refined by bisection; no sign
    change up to x_max is reported as the NoRootOnRange regime.  Raises
    InvalidSolution when a located boundary exceeds the threshold a(j).
    """
    q = float(q)
    h = np.ones(model.n_states) if h is None else np.asarray(h, dtype=float)
    if h.shape != (model.n_states,):
        raise ValidationError("gain weight vector has the wrong length")
    gain = GainSpec.shepp(h)
    k1 = kappa(model, 1.0)
    if q <= k1:
        raise Unbounded(
            f"q = {q} <= kappa(1) = {k1:.6g}: the stopping value is infinite"
        )
    rep = spectral_decompose(model, q)
    table = ScaleTable.from_rep(rep, x_max=x_max, step=step)
    w0 = np.diag(w_zero_plus(model, q))
    grid = table.grid
    u_grid = table.z_row - q * table.w_row
    states = []
    for j in range(model.n_states):
        a_j = a_threshold(rep, j, x_max=x_max, step=step)
        if w0[j] >= 1.0 / q:
            states.append(StateSolution(j, ZERO_BOUNDARY, 0.0, a_j))
            continue
        col = u_grid[:, j]
        hit = None
        for k in range(1, len(grid)):
            if col[k] <= 0.0:
                hit = k
                break
        if hit is None:
            states.append(StateSolution(j, NO_ROOT_ON_RANGE, math.nan, a_j))
            continue
        lo, hi = grid[hit - 1], grid[hit]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if u_fn(rep, j, mid) <= 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-8:
                break
        c_j = float(0.5 * (lo + hi))
        if c_j > a_j + 1e-10:
            raise InvalidSolution(
                f"state {j + 1}: boundary c = {c_j:.6g} exceeds a(j) = {a_j:.6g}"
            )
        states.append(StateSolution(j, INTERIOR_ROOT, c_j, a_j))
    valid = all(
        st.has_boundary and st.c <= st.a + 1e-10 for st in states
    )
    return StopSolution(
        q=q, gain=gain, states=tuple(states), rep=rep, table=table,
        kappa1=k1, valid=valid,
    )


# --- general boundary curves -------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """One state's integrated drawdown boundary g(s, j)."""

    state: int
    s: np.ndarray
    g: np.ndarray
    violations: tuple   # (s, code, detail) records
    stiff: bool
    completed: bool


class _Abort(Exception):
    def __init__(self, code, message):
        self.code = code
        self.message = message
        super().__init__(message)


def solve_boundary_ode(model: MapModel, q: float, gain: GainSpec, s_range,
                       init, step: float = 1e-3, x_max: float = 5.0,
                       strict: bool = False):
    """Integrate g'(s,j) = 1 - (f'/f) [Z 1]_j(g) / (q [W 1]_j(g)) per state.

    Fourth-order Runge-Kutta on a uniform s-grid; scale-function row sums
    come from a tabulation (cubic interpolation).  Every accepted step is
    checked against the weaker sufficient inequality for the stopped
    supermartingale property (the computed slope may not exceed the
    right-hand side) and against g <= a(j); violations are recorded, or
    raised when strict is set.  Stiff right-hand sides engage sub-steps
    and flag the curve.  Returns a tuple of BoundaryCurve.
    """
    q = float(q)
    s0, s1 = float(s_range[0]), float(s_range[1])
    if s1 <= s0:
        raise ValidationError("empty s-range")
    if s0 <= gain.s_min:
        raise ValidationError("s-range starts where the gain vanishes")
    init = np.asarray(init, dtype=float)
    if init.shape != (model.n_states,):
        raise ValidationError("one initial boundary value per state required")
    rep = spectral_decompose(model, q)
    table = ScaleTable.from_rep(rep, x_max=x_max)
    n_steps = int(round((s1 - s0) / step))
    s_vals = s0 + step * np.arange(n_steps + 1)
    curves = []
    for j in range(model.n_states):
        a_j = a_threshold(rep, j, x_max=x_max)
        violations = []
        stiff = False

        def rhs(s, g, j=j):
            if g > x_max:
                raise _Abort("BlowUp", f"g = {g:.6g} beyond the table range")
            denom = q * float(table.w_row_at(g)[j])
            if denom < DIV_FLOOR:
                raise _Abort(
                    "DivisionNearZero", f"q [W 1]_j(g) = {denom:.3e} at g = {g:.6g}"
                )
            z1 = float(table.z_row_at(g)[j])
            return 1.0 - gain.f_prime(s, j) / gain.f(s, j) * z1 / denom

        g = float(init[j])
        g_path = [g]
        completed = True
        for k in range(n_steps):
            s = s_vals[k]
            try:
                slope0 = rhs(s, g)
                n_sub = int(min(1000, max(1, math.ceil(abs(slope0) * step / 5e-4))))
                if n_sub > 1:
                    stiff = True
                hsub = step / n_sub
                g_new = g
                for m in range(n_sub):
                    sm = s + m * hsub
                    k1 = rhs(sm, g_new)
                    k2 = rhs(sm + 0.5 * hsub, g_new + 0.5 * hsub * k1)
                    k3 = rhs(sm + 0.5 * hsub, g_new + 0.5 * hsub * k2)
                    k4 = rhs(sm + hsub, g_new + hsub * k3)
                    g_new = g_new + hsub / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if g_new < 0 or g_new > x_max:
                    raise _Abort("BlowUp", f"g = {g_new:.6g} left [0, x_max]")
            except _Abort as ab:
                if strict:
                    exc = {
                        "BlowUp": BlowUp,
                        "DivisionNearZero": DivisionNearZero,
                    }[ab.code]
                    raise exc(f"state {j + 1}, s = {s:.6g}: {ab.message}")
                violations.append((float(s), ab.code, ab.message))
                completed = False
                break
            slope = (g_new - g) / step
            try:
                bound = max(rhs(s, g), rhs(s + step, g_new))
                if slope > bound + 1e-7 * (1.0 + abs(bound)):
                    msg = f"slope {slope:.6g} exceeds the admissible bound {bound:.6g}"
                    if strict:
                        raise ConstraintViolation(
                            f"state {j + 1}, s = {s:.6g}: {msg}"
                        )
                    violations.append((float(s), "WeakInequality", msg))
            except _Abort:
                pass
            if g_new > a_j + 1e-10:
                msg = f"g = {g_new:.6g} exceeds a(j) = {a_j:.6g}"
                if strict:
                    raise ConstraintViolation(f"state {j + 1}, s = {s + step:.6g}: {msg}")
                violations.append((float(s + step), "ConstraintViolation", msg))
            g = g_new
            g_path.append(g)
        curves.append(BoundaryCurve(
            state=j,
            s=s_vals[: len(g_path)],
            g=np.array(g_path),
            violations=tuple(violations),
            stiff=stiff,
            completed=completed,
        ))
    return tuple(curves)


# --- regime diagnostics ------------------------------------------------


@dataclass(frozen=True)
class StateRegime:
    state: int
    w_one_zero: float
    case: str           # "i" (zero boundary) or "ii" (scan for a root)
    a: float


@dataclass(frozen=True, eq=False)
class RegimeReport:
    q: float
    kappa1: float
    unbounded: bool
    states: tuple


def regime_report(model: MapModel, q: float) -> RegimeReport:
    """Classify each state by the applicable branch of the boundary theorem."""
    q = float(q)
    k1 = kappa(model, 1.0)
    unbounded = q <= k1
    rep = spectral_decompose(model, q)
    w0 = np.diag(w_zero_plus(model, q))
    states = []
    for j in range(model.n_states):
        case = "i" if w0[j] >= 1.0 / q else "ii"
        states.append(StateRegime(
            state=j,
            w_one_zero=float(w0[j]),
            case=case,
            a=a_threshold(rep, j),
        ))
    return RegimeReport(q=q, kappa1=k1, unbounded=unbounded, states=tuple(states))
