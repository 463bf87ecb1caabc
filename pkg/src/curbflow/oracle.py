"""Brute-force checks on the corridor solver over a uniform binning of the corridor.

The optimum is found by scaled projected gradient on the discretized total
cost; the equilibrium by bisection on the common cost with a damped fixed
point for the cruising coupling.  Neither uses the ODEs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .scenario import Scenario
from .search import POLE_GUARD
from .solver import solve_optimum


MIN_BINS = 10


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BinnedSolution:
    cls: str
    mode: str
    x: np.ndarray
    h: float
    n: np.ndarray
    m: np.ndarray
    objective: float
    level: float
    residuals: dict = field(default_factory=dict)
    scenario: Optional[Scenario] = None

    @property
    def mass(self) -> float:
        return float(self.n.sum() * self.h)

    @property
    def span(self) -> float:
        """Outer edge of the last bin holding more than 1e-6 vehicles per km."""
        idx = np.nonzero(self.n > 1e-6)[0]
        return float(self.x[idx[-1]] + self.h / 2) if idx.size else 0.0


def _grid(sc: Scenario, cls: str, bins: int, x_max: Optional[float]):
    # below about 100 bins the discretization error exceeds the verification tolerances
    if bins < MIN_BINS:
        raise OracleError(f"the oracle needs at least {MIN_BINS} bins")
    if x_max is None:
        x_max = min(2.0 * solve_optimum(sc, cls).span, sc.x_hat)
    h = x_max / bins
    x = (np.arange(bins) + 0.5) * h
    m = np.asarray(sc.m(cls, x), dtype=float) * np.ones(bins)
    return x, h, m


def _cap(sc: Scenario, m):
    return m * POLE_GUARD if sc.search.kind == "binomial" else m


def _objective(sc, cls, x, h, n, m):
    lam, _, gam = sc.coeffs(cls)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(m > 0, n / m, 0.0)
    return float(np.sum((lam * x + gam * sc.search.time_of_occupancy(rho)) * n) * h)


def _marginal(sc, cls, x, n, m):
    lam, _, gam = sc.coeffs(cls)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(m > 0, n / m, 0.0)
    return lam * x + gam * sc.search.marginal_of_occupancy(rho)


def _curvature(sc, cls, n, m, steep):
    """Per-bin second derivative of the unit-width cost on the bin's current branch."""
    _, _, gam = sc.coeffs(cls)
    model = sc.search
    if model.kind == "binomial":
        return gam * 2.0 / (m * (1.0 - n / m) ** 3)
    return gam * 2.0 * np.where(steep, model.Delta, model.delta) / m


def _branch_boxes(sc, cls, x, n, m, cap, p):
    """Per-bin bounds confining each bin to one smooth branch of the search model.

    Bins on the piecewise kink move to the branch their subgradient points to
    (given the current level estimate p) or stay pinned at the kink.
    """
    lo = np.zeros_like(n)
    if sc.search.kind == "binomial":
        return lo, cap, np.zeros(n.shape, dtype=bool)
    model = sc.search
    lam, _, gam = sc.coeffs(cls)
    km = model.kink * m
    rho = n / m
    at = np.abs(rho - model.kink) <= 1e-12
    above = (rho > model.kink) & ~at
    hi = np.where(above, cap, km)
    lo = np.where(above, km, 0.0)
    if p is not None and at.any():
        left = lam * x + gam * 2 * model.delta * model.kink
        right = lam * x + gam * model.marginal_right_of_kink()
        down = at & (left > p)
        up = at & (right < p)
        stay = at & ~down & ~up
        lo = np.where(up | stay, km, lo)
        hi = np.where(up, cap, np.where(stay, km, hi))
        above = above | up
    else:
        lo = np.where(at, km, lo)
    return lo, hi, above


def project(y, w, lo, hi, h, total):
    """Weighted projection onto {lo <= n <= hi, sum(n) h = total}.

    Minimizes sum w (n - y)^2; the solution is clip(y - nu / w) for the
    multiplier nu that restores the mass.
    """
    def mass(nu):
        return np.clip(y - nu / w, lo, hi).sum() * h - total

    if hi.sum() * h <= total:
        raise OracleError("mass exceeds the binned capacity")
    a = float(np.min((y - hi) * w)) - 1.0
    b = float(np.max((y - lo) * w)) + 1.0
    if np.all(lo == hi):
        return lo.copy(), 0.0
    nu = brentq(mass, a, b, xtol=1e-14 * max(1.0, abs(a), abs(b)), rtol=1e-15, maxiter=500)
    return np.clip(y - nu / w, lo, hi), nu


def kkt_residuals(sc: Scenario, cls: str, x, n, m, tol: float = 1e-9):
    """Equal-marginal spread over used bins, in the subgradient sense at the piecewise kink."""
    mp = _marginal(sc, cls, x, n, m)
    lo_g = mp.copy()
    hi_g = mp.copy()
    model = sc.search
    if model.kind == "piecewise":
        _, _, gam = sc.coeffs(cls)
        at_kink = np.abs(n / m - model.kink) <= 1e-7
        lam, _, _ = sc.coeffs(cls)
        lo_g[at_kink] = lam * x[at_kink] + gam * 2 * model.delta * model.kink
        hi_g[at_kink] = lam * x[at_kink] + gam * model.marginal_right_of_kink()
    else:
        at_kink = np.zeros_like(n, dtype=bool)
    used = n > tol * m
    if not used.any():
        return 0.0, 0.0, 0.0
    # the multiplier lies in [max lower subgradient, min upper subgradient] when KKT holds
    p_lo, p_hi = float(lo_g[used].max()), float(hi_g[used].min())
    p = 0.5 * (p_lo + p_hi) if p_lo <= p_hi else float(np.median(mp[used & ~at_kink])) if (used & ~at_kink).any() else p_lo
    dist = np.maximum(np.maximum(lo_g - p, p - hi_g), 0.0)
    spread = float(dist[used].max())
    unused = ~used
    # empty bins must not offer a cheaper marginal than the common level
    slack = float(np.maximum(p - mp[unused], 0.0).max()) if unused.any() else 0.0
    return p, spread, slack


def binned_optimum(sc: Scenario, cls: str, bins: int = 2000, x_max: Optional[float] = None,
                   n0=None, max_iter: int = 2000, tol: float = 1e-12) -> BinnedSolution:
    """Minimize sum (lambda x_j + gamma S_j) n_j h subject to mass and 0 <= n_j <= m_j."""
    N_i = sc.demand(cls)
    x, h, m = _grid(sc, cls, bins, x_max if N_i > 0 else (x_max or sc.x_hat))
    if N_i == 0:
        z = np.zeros(bins)
        return BinnedSolution(cls, "optimum", x, h, z, m, 0.0, float(_marginal(sc, cls, x[:1], z[:1], m[:1])[0]),
                              {"iterations": 0, "kkt_spread": 0.0, "kkt_slack": 0.0, "objective_trace_monotone": True}, sc)
    cap = _cap(sc, m)
    zero = np.zeros(bins)
    n0 = np.full(bins, N_i / (bins * h)) if n0 is None else np.asarray(n0, dtype=float)
    n, _ = project(n0, np.ones(bins), zero, cap, h, N_i)
    f = _objective(sc, cls, x, h, n, m)
    trace = [f]
    p_est = None
    it = 0
    for it in range(1, max_iter + 1):
        g = _marginal(sc, cls, x, n, m)
        lo, hi, steep = _branch_boxes(sc, cls, x, n, m, cap, p_est)
        if (hi * h).sum() < N_i or (lo * h).sum() > N_i:
            lo, hi = zero, cap
        w = _curvature(sc, cls, n, m, steep)
        t = 1.0
        while True:
            cand, nu = project(n - t * g / w, w / t, lo, hi, h, N_i)
            fc = _objective(sc, cls, x, h, cand, m)
            decrease = float(np.dot(g, cand - n) * h)
            if fc <= f + 1e-4 * decrease or t < 1e-12:
                break
            t *= 0.5
        moved = float(np.max(np.abs(cand - n) / m))
        if fc <= f:
            n, f = cand, fc
            p_est = -nu / t
        trace.append(f)
        if moved < tol or t < 1e-12:
            break
    p, spread, slack = kkt_residuals(sc, cls, x, n, m)
    res = {
        "iterations": it,
        "kkt_spread": spread,
        "kkt_slack": slack,
        "mass_residual": abs(n.sum() * h - N_i) / N_i,
        "objective_trace_monotone": bool(np.all(np.diff(trace) <= 0)),
    }
    if spread > 1e-3 * abs(p) and it >= max_iter:
        raise OracleError(f"projected gradient stalled: KKT spread {spread:.3g} after {it} iterations")
    return BinnedSolution(cls, "optimum", x, h, n, m, f, p, res, sc)


def _cruise(sc: Scenario, cls: str, n, h):
    inner = h * (np.cumsum(n) - 0.5 * n)
    if cls == "a":
        return sc.beta_c * sc.N_c + sc.beta_a * inner
    return sc.beta_c * (n.sum() * h - inner)


def binned_equilibrium(sc: Scenario, cls: str, bins: int = 2000, x_max: Optional[float] = None,
                       damping: float = 0.5, start: float = 0.0, max_iter: int = 500,
                       tol: float = 1e-12) -> BinnedSolution:
    """Common-cost distribution: per-bin inversion of P_j = p, bisection on p."""
    N_i = sc.demand(cls)
    x, h, m = _grid(sc, cls, bins, x_max if N_i > 0 else (x_max or sc.x_hat))
    lam, beta, gam = sc.coeffs(cls)
    hi = _cap(sc, m)
    model = sc.search
    stats = {"passes": 0, "max_passes": 0}

    def fixed_point(p):
        n = np.minimum(np.full(bins, start), hi)
        for k in range(1, max_iter + 1):
            c = _cruise(sc, cls, n, h)
            target = (p - lam * x - c) / gam
            new = np.minimum(model.occupancy_at_time(target) * m, hi)
            new = np.where(target > model.s_min, new, 0.0)
            step = new - n
            if float(np.max(np.abs(step))) <= tol * max(1.0, float(m.max())):
                stats["passes"] = k
                stats["max_passes"] = max(stats["max_passes"], k)
                return new
            n = n + (1.0 if beta == 0 else damping) * step
        raise OracleError(f"cruising fixed point not reached at p={p:.6g}")

    base = gam * model.s_min + (sc.beta_c * sc.N_c if cls == "a" else 0.0)
    if N_i == 0:
        z = np.zeros(bins)
        return BinnedSolution(cls, "equilibrium", x, h, z, m, 0.0, base, {"passes": 0}, sc)

    def excess(p):
        return fixed_point(p).sum() * h - N_i

    p_lo, p_hi = base, base + 1.0
    while excess(p_hi) < 0:
        p_lo, p_hi = p_hi, base + 2 * (p_hi - base)
        if p_hi - base > 1e6:
            raise OracleError("no common cost level places all vehicles")
    p = brentq(excess, p_lo, p_hi, xtol=1e-13, rtol=1e-14, maxiter=300)
    n = fixed_point(p)
    c = _cruise(sc, cls, n, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = lam * x + gam * model.time_of_occupancy(n / m) + c
    used = n > 0
    res = {
        "passes": stats["passes"],
        "mass_residual": abs(n.sum() * h - N_i) / N_i,
        "cost_spread": float(np.ptp(cost[used])) if used.any() else 0.0,
    }
    obj = float(np.sum(cost * n) * h)
    return BinnedSolution(cls, "equilibrium", x, h, n, m, obj, float(p), res, sc)


@dataclass(frozen=True)
class FiniteDifference:
    numeric: float
    analytic: float
    one_sided: bool
    at_kink: bool

    @property
    def rel_error(self) -> float:
        return abs(self.numeric - self.analytic) / max(abs(self.analytic), 1e-300)


def finite_difference_marginal(sc: Scenario, cls: str, sol: BinnedSolution, j: int) -> FiniteDifference:
    """Central difference of the binned total cost in bin j, against the analytic marginal."""
    n, m = sol.n, sol.m
    base = n.copy()
    analytic = float(_marginal(sc, cls, sol.x[j:j + 1], n[j:j + 1], m[j:j + 1])[0])
    model = sc.search
    at_kink = model.kind == "piecewise" and abs(n[j] / m[j] - model.kink) < 1e-6
    cap = _cap(sc, m[j])
    eps = 1e-4 * n[j] if n[j] > 0 else 1e-6 * m[j]

    def tp(v):
        base[j] = v
        return _objective(sc, cls, sol.x, sol.h, base, m)

    one_sided = n[j] - eps < 0 or n[j] + eps > cap
    if n[j] - eps < 0:
        num = (tp(n[j] + eps) - tp(n[j])) / (eps * sol.h)
    elif n[j] + eps > cap:
        num = (tp(n[j]) - tp(n[j] - eps)) / (eps * sol.h)
    else:
        num = (tp(n[j] + eps) - tp(n[j] - eps)) / (2 * eps * sol.h)
    return FiniteDifference(float(num), analytic, bool(one_sided), bool(at_kink))


def finite_difference_check(sc: Scenario, cls: str, sol: BinnedSolution, samples: int = 50):
    """Largest relative error over interior bins away from the kink, and the bins checked."""
    model = sc.search
    rho = sol.n / sol.m
    ok = (sol.n > 1e-3 * sol.m) & (rho < 0.999)
    if model.kind == "piecewise":
        ok &= np.abs(rho - model.kink) > 1e-4
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return 0.0, []
    pick = idx[np.linspace(0, idx.size - 1, min(samples, idx.size)).astype(int)]
    errs = [finite_difference_marginal(sc, cls, sol, int(j)).rel_error for j in pick]
    return float(max(errs)), [int(j) for j in pick]


def cruising_total(sc: Scenario, sol: BinnedSolution) -> float:
    """Binned integral of n_j c_j, for comparison with the closed-form class total."""
    return float(np.sum(sol.n * _cruise(sc, sol.cls, sol.n, sol.h)) * sol.h)
