"""Parking distributions along the corridor: unpriced equilibrium and cost-minimizing optimum.

The numeric solver integrates the class ODE backward from the span, where the
density vanishes, to the CBD with fixed-step RK4, and shoots on the span until
the parked mass equals the class demand.  ``closed_form_llp`` gives the exact
solution of the piecewise-linear search model in the limit of an infinitely
steep saturation branch, for constant supply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import costs
from .scenario import Scenario
from .search import POLE_GUARD, Piecewise

EQUILIBRIUM = "equilibrium"
OPTIMUM = "optimum"
MODES = (EQUILIBRIUM, OPTIMUM)

STEPS = 2000
POLE_REFINE = 0.999
MAX_HALVINGS = 8
MASS_RTOL = 1e-4
SPAN_XTOL = 1e-9
MAX_ITER = 200
LEVEL_POINTS = 10
FLATNESS_RTOL = 1e-3


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    pass


class SupplyInfeasibleError(SolverError):
    def __init__(self, message: str, max_mass: float):
        super().__init__(message)
        self.max_mass = max_mass


class ModelDomainError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class SpatialSolution:
    cls: str
    mode: str
    xs: np.ndarray
    n: np.ndarray
    m: np.ndarray
    span: float
    level: float
    scenario: Scenario = field(repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.n, self.xs)) if len(self.xs) > 1 else 0.0


def _check_args(cls: str, mode: str):
    if cls not in ("a", "c"):
        raise ValueError(f"vehicle class must be 'a' or 'c', got {cls!r}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


class _Shooter:
    """Backward RK4 integration of one class ODE for a trial span."""

    def __init__(self, sc: Scenario, cls: str, mode: str):
        self.sc = sc
        self.cls = cls
        self.mode = mode
        self.model = sc.search
        self.lam, self.beta, self.gam = sc.coeffs(cls)
        self.piecewise = isinstance(self.model, Piecewise)
        self.sticky = self.piecewise and mode == OPTIMUM

    def rhs(self, n: float, m: float, mp: float, slope: Optional[float] = None) -> float:
        if slope is None:
            p = self.model.raw_partials(n, m)
        else:
            # piecewise partials on a forced branch
            sn = slope / m
            p = (sn, 0.0, -sn * n / m, -sn / m)
        dn, dnn, dm, dnm = p
        if self.mode == EQUILIBRIUM:
            if self.cls == "a":
                drive = (self.lam + self.beta * n) / self.gam
            else:
                drive = (self.lam - self.beta * n) / self.gam
            return -(drive + dm * mp) / dn
        denom = 2 * dn + n * dnn
        if not denom > 0:
            raise ModelDomainError("degenerate search model: zero curvature of the marginal cost")
        return -(self.lam / self.gam + (dm + n * dnm) * mp) / denom

    def _guard(self, n: float, m: float, state: dict) -> float:
        if n < 0:
            state["interior_zero"] += 1
            return 0.0
        if self.piecewise:
            if n > m:
                state["saturated"] = True
            return n
        cap = m * POLE_GUARD
        if n > cap:
            state["saturated"] = True
            return cap
        return n

    def _on_plateau(self, x: float, span: float) -> bool:
        # marginal cost target (level - lambda x)/gamma lies inside the jump at the kink
        target = self.lam * (span - x) / self.gam
        return target <= self.model.marginal_right_of_kink()

    def _rk4(self, h, n, m0, mh, m1, d0, dh, d1, state, slope=None):
        """Backward RK4 step of length h; returns (n_new, mass added)."""
        k1 = self.rhs(n, m0, d0, slope)
        n2 = self._guard(n - 0.5 * h * k1, mh, state)
        k2 = self.rhs(n2, mh, dh, slope)
        n3 = self._guard(n - 0.5 * h * k2, mh, state)
        k3 = self.rhs(n3, mh, dh, slope)
        n4 = self._guard(n - h * k3, m1, state)
        k4 = self.rhs(n4, m1, d1, slope)
        n_new = n - h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        return n_new, h * (n + 2 * n2 + 2 * n3 + n4) / 6.0

    def _supply3(self, xa, xb):
        sc, cls = self.sc, self.cls
        xm = 0.5 * (xa + xb)
        return (sc.m(cls, xa), sc.m(cls, xm), sc.m(cls, xb),
                sc.dm(cls, xa), sc.dm(cls, xm), sc.dm(cls, xb))

    def _plateau_step(self, xa, xb, m0, mh, m1):
        k = self.model.kink
        return k * m1, (xa - xb) * k * (m0 + 4 * mh + m1) / 6.0

    def _step(self, x, x1, n, m0, mh, m1, d0, dh, d1, state):
        """Backward step from x to x1 < x; returns (n_new, mass added)."""
        h = x - x1
        if not self.piecewise:
            n_new, dM = self._rk4(h, n, m0, mh, m1, d0, dh, d1, state)
            return self._guard(n_new, m1, state), dM
        model = self.model
        k = model.kink
        span = state["span"]
        on_kink = abs(n - k * m0) <= 1e-12 * k * m0
        if self.sticky and on_kink:
            if self._on_plateau(x1, span):
                return self._plateau_step(x, x1, m0, mh, m1)
            below = False
        else:
            below = n <= k * m0
        slope = model.delta if below else model.Delta
        n_new, dM = self._rk4(h, n, m0, mh, m1, d0, dh, d1, state, slope)
        if (n_new > k * m1) == (not below):
            return self._guard(n_new, m1, state), dM
        # branch change inside the step: locate the crossing, then finish on the other branch
        lo, hi = 0.0, h
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            sup = self._supply3(x, x - mid)
            trial, _ = self._rk4(mid, n, *sup, state, slope)
            if (trial > k * sup[2]) == below:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-15 * max(1.0, h):
                break
        xc = x - hi
        sup = self._supply3(x, xc)
        _, dM1 = self._rk4(hi, n, *sup, state, slope)
        nc = k * sup[2]
        rest = self._supply3(xc, x1)
        if xc - x1 <= 0:
            return self._guard(nc, m1, state), dM1
        if self.sticky and below and self._on_plateau(x1, span):
            n_new, dM2 = self._plateau_step(xc, x1, rest[0], rest[1], rest[2])
        else:
            other = model.Delta if below else model.delta
            n_new, dM2 = self._rk4(xc - x1, nc, *rest, state, other)
        return self._guard(n_new, m1, state), dM1 + dM2

    def run(self, span: float, record: bool = False):
        sc, cls = self.sc, self.cls
        h = span / STEPS
        half = span - 0.5 * h * np.arange(2 * STEPS + 1)
        half[-1] = 0.0
        m_half = np.asarray(sc.m(cls, half), dtype=float).tolist()
        dm_half = np.asarray(sc.dm(cls, half), dtype=float).tolist()
        state = {"saturated": False, "interior_zero": 0, "span": span, "refined": 0}
        n, M, x = 0.0, 0.0, span
        xs, ns, Ms = [x], [n], [M]
        for j in range(STEPS):
            m0, mh, m1 = m_half[2 * j], m_half[2 * j + 1], m_half[2 * j + 2]
            x1 = half[2 * j + 2]
            rho = n / m0 if m0 > 0 else 1.0
            if not self.piecewise and rho > POLE_REFINE:
                depth = min(MAX_HALVINGS, max(1, int(-math.log10(max(1 - rho, 1e-300))) - 2))
                sub = 2**depth
                hs = (x - x1) / sub
                state["refined"] += 1
                for i in range(sub):
                    xa = x - i * hs
                    xb = xa - hs if i < sub - 1 else x1
                    n, dM = self._step(xa, xb, n, *self._supply3(xa, xb), state)
                    M += dM
                    if record and i < sub - 1:
                        xs.append(xb)
                        ns.append(n)
                        Ms.append(M)
            else:
                n, dM = self._step(x, x1, n, m0, mh, m1,
                                   dm_half[2 * j], dm_half[2 * j + 1], dm_half[2 * j + 2], state)
                M += dM
            x = x1
            if state["saturated"] and not record:
                return math.inf, state
            if record:
                xs.append(x)
                ns.append(n)
                Ms.append(M)
        if record:
            return (np.array(xs[::-1]), np.array(ns[::-1]), np.array(Ms[::-1])), state
        return (math.inf if state["saturated"] else M), state


def _trivial(sc: Scenario, cls: str, mode: str) -> SpatialSolution:
    lam, _, gam = sc.coeffs(cls)
    level = gam * sc.search.s_min
    if mode == EQUILIBRIUM and cls == "a":
        level += sc.beta_c * sc.N_c
    xs = np.array([0.0])
    return SpatialSolution(cls, mode, xs, np.zeros(1), np.atleast_1d(sc.m(cls, xs)), 0.0, level, sc,
                           {"iterations": 0, "mass_residual": 0.0, "flatness": 0.0})


def plateau_mask(sol) -> np.ndarray:
    model = sol.scenario.search
    if sol.mode != OPTIMUM or not isinstance(model, Piecewise):
        return np.zeros(len(sol.xs), dtype=bool)
    return np.abs(sol.n / sol.m - model.kink) <= 1e-9


def flatness(sol) -> float:
    """Sup-norm distance of P (equilibrium) or MP (optimum) from the solution level.

    At the piecewise kink the marginal cost is set-valued; there the distance
    to the interval [left value, right value] is used.
    """
    if len(sol.xs) < 2:
        return 0.0
    if sol.mode == EQUILIBRIUM:
        return float(np.max(np.abs(costs.generalized_profile(sol) - sol.level)))
    mp = costs.marginal_profile(sol)
    dev = np.abs(mp - sol.level)
    mask = plateau_mask(sol)
    if mask.any():
        lam, _, gam = sol.scenario.coeffs(sol.cls)
        model = sol.scenario.search
        hi = lam * sol.xs[mask] + gam * model.marginal_right_of_kink()
        lo = lam * sol.xs[mask] + gam * 2 * model.delta * model.kink
        dev[mask] = np.maximum(0.0, np.maximum(lo - sol.level, sol.level - hi))
    return float(np.max(dev))


def _solve(sc: Scenario, cls: str, mode: str) -> SpatialSolution:
    _check_args(cls, mode)
    target = sc.demand(cls)
    if target <= 0:
        return _trivial(sc, cls, mode)
    shooter = _Shooter(sc, cls, mode)
    shots = 0

    def mass(span):
        nonlocal shots
        shots += 1
        return shooter.run(span)[0]

    def _excess(span):
        v = mass(span)
        return v - target if math.isfinite(v) else target

    x_hat = sc.x_hat
    avg_m = float(np.mean(sc.m(cls, np.linspace(0.0, x_hat, 51))))
    if avg_m <= 0:
        raise SupplyInfeasibleError(f"no parking supply for class {cls}", 0.0)
    lo, hi = 0.0, min(x_hat, 2.0 * target / avg_m)
    m_hi = mass(hi)
    while m_hi < target:
        if hi >= x_hat:
            raise SupplyInfeasibleError(
                f"class {cls} demand {target:g} exceeds the mass attainable within the supply span "
                f"({m_hi:g})", m_hi)
        lo, hi = hi, min(2.0 * hi, x_hat)
        m_hi = mass(hi)
        if shots > MAX_ITER:
            raise ConvergenceError("bracket expansion exceeded the iteration cap")

    try:
        span = brentq(_excess, lo, hi, xtol=SPAN_XTOL, maxiter=MAX_ITER)
    except RuntimeError as exc:
        raise ConvergenceError(f"span shooting did not converge: {exc}") from None

    (xs, n, M), state = shooter.run(span, record=True)
    if state["saturated"]:
        # sign change sits on the saturation jump: demand is not attainable
        below, _ = shooter.run(span * (1 - 1e-9))
        raise SupplyInfeasibleError(
            f"class {cls} saturates its parking supply before absorbing demand {target:g}",
            below if math.isfinite(below) else float("nan"))
    residual = abs(M[0] - target) / target
    if residual > MASS_RTOL:
        raise ConvergenceError(f"mass residual {residual:.3g} above tolerance")

    m = np.asarray(sc.m(cls, xs), dtype=float)
    lam, _, gam = sc.coeffs(cls)
    diag = {
        "iterations": shots,
        "mass_residual": residual,
        "interior_zero": state["interior_zero"],
        "refined_steps": state["refined"],
    }
    sol = SpatialSolution(cls, mode, xs, n, m, span, math.nan, sc, diag)
    if mode == EQUILIBRIUM:
        level = float(np.mean(costs.generalized_profile(sol)[-LEVEL_POINTS:]))
    else:
        level = lam * span + gam * sc.search.s_min
    sol = SpatialSolution(cls, mode, xs, n, m, span, level, sc, diag)
    diag["flatness"] = flatness(sol)
    diag["flatness_rel"] = diag["flatness"] / abs(level) if level else diag["flatness"]
    return sol


def solve_equilibrium(sc: Scenario, cls: str) -> SpatialSolution:
    """Unpriced equilibrium: equal generalized cost at every used location."""
    return _solve(sc, cls, EQUILIBRIUM)


def solve_optimum(sc: Scenario, cls: str) -> SpatialSolution:
    """Class-cost minimizing distribution: equal marginal cost at every used location."""
    return _solve(sc, cls, OPTIMUM)


def solve(sc: Scenario, cls: str, mode: str) -> SpatialSolution:
    return _solve(sc, cls, mode)


def no_cruising_solution(sc: Scenario, cls: str, mode: str) -> SpatialSolution:
    return _solve(sc.without_cruising(), cls, mode)


# ---------------------------------------------------------------------------
# closed forms for piecewise search, constant supply, infinitely steep cap
# ---------------------------------------------------------------------------


class _Tail:
    """Density n(s) at distance s inward from the span, below the kink, and its mass."""

    def __init__(self, sc: Scenario, cls: str, mode: str, m: float):
        model = sc.search
        lam, beta, gam = sc.coeffs(cls)
        self.m, self.lam, self.beta, self.gam, self.delta = m, lam, beta, gam, model.delta
        self.cap = m * model.kink
        self.kind = "linear"
        if mode == OPTIMUM:
            self.slope = m * lam / (2 * gam * model.delta)
        elif beta == 0:
            self.slope = m * lam / (gam * model.delta)
        else:
            self.kind = "grow" if cls == "a" else "decay"
            self.a = m * beta / (gam * model.delta)
            self.r = lam / beta
            if cls == "c" and self.r <= self.cap:
                raise ModelDomainError(
                    "lambda_c <= m_c beta_c (1 - omega): HV density cannot reach the saturation kink")

    def density(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return self.slope * s
        if self.kind == "grow":
            return self.r * np.expm1(self.a * s)
        return -self.r * np.expm1(-self.a * s)

    def mass(self, s: float) -> float:
        if self.kind == "linear":
            return 0.5 * self.slope * s * s
        if self.kind == "grow":
            return self.r * (np.expm1(self.a * s) / self.a - s)
        return self.r * (s + np.expm1(-self.a * s) / self.a)

    def kink_length(self) -> float:
        if self.kind == "linear":
            return self.cap / self.slope
        if self.kind == "grow":
            return math.log1p(self.cap / self.r) / self.a
        return -math.log1p(-self.cap / self.r) / self.a


def saturated_span(sc: Scenario, cls: str, mode: str) -> float:
    """Span from the saturated-core formulas; only meaningful when a saturated core exists."""
    model = sc.search
    lam, beta, gam = sc.coeffs(cls)
    m = float(sc.m(cls, 0.0))
    w1 = 1 - model.omega
    d = model.delta
    N = sc.demand(cls)
    if mode == OPTIMUM:
        return N / (m * w1) + gam * d * w1 / lam
    if beta == 0:
        return N / (m * w1) + gam * d * w1 / (2 * lam)
    if cls == "a":
        return (N / (m * w1) - gam * d / (m * beta)
                - gam * d * (lam + m * beta * w1) / (m**2 * beta**2 * w1) * math.log(lam / (lam + m * beta * w1)))
    arg = lam / (lam - m * beta * w1) if lam > m * beta * w1 else -1.0
    if arg <= 0:
        raise ModelDomainError("lambda_c <= m_c beta_c (1 - omega): logarithm undefined")
    return (N / (m * w1) + gam * d / (m * beta)
            - gam * d * (lam - m * beta * w1) / (m**2 * beta**2 * w1) * math.log(arg))


def _level(sc: Scenario, cls: str, mode: str, span: float) -> float:
    lam, _, _ = sc.coeffs(cls)
    if mode == EQUILIBRIUM and cls == "a":
        return sc.beta_c * sc.N_c + sc.beta_a * sc.N_a + lam * span
    return lam * span


def closed_form_llp(sc: Scenario, cls: str, mode: str, points: int = 2001) -> SpatialSolution:
    """Exact solution for piecewise search and constant supply with an infinitely steep cap.

    A saturated core at occupancy 1 - omega on [0, x1] is followed by the
    analytic tail.  If the tail alone already holds the class demand, there is
    no core and the span solves tail_mass(span) = demand.
    """
    _check_args(cls, mode)
    if not isinstance(sc.search, Piecewise):
        raise ValueError("closed forms need the piecewise search model")
    if not sc.supply.is_constant:
        raise ValueError("closed forms need a constant supply profile")
    N = sc.demand(cls)
    if N <= 0:
        return _trivial(sc, cls, mode)
    m = float(sc.m(cls, 0.0))
    tail = _Tail(sc, cls, mode, m)
    s_k = tail.kink_length()
    tail_mass = tail.mass(s_k)
    if tail_mass <= N:
        core = (N - tail_mass) / tail.cap
        span = core + s_k
        regime = "saturated"
    else:
        hi = s_k
        span = brentq(lambda s: tail.mass(s) - N, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
        core = 0.0
        regime = "unsaturated"
    xs = np.unique(np.concatenate([np.linspace(0.0, span, points), [core]]))
    n = np.where((xs <= core) & (core > 0), tail.cap, tail.density(np.maximum(span - xs, 0.0)))
    n[-1] = 0.0
    level = _level(sc, cls, mode, span)
    try:
        t1 = saturated_span(sc, cls, mode)
    except ModelDomainError:
        t1 = math.nan
    diag = {"regime": regime, "core_end": core, "saturated_span": t1,
            "saturated_level": _level(sc, cls, mode, t1)}
    return SpatialSolution(cls, mode, xs, n, np.full_like(xs, m), span, level, sc, diag)
