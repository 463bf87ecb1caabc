"""Upper-level planning: how much parking area to build and what share to reserve for AVs.

Designs are constant along the corridor: an area width ``k`` per km and an AV
area share ``theta``.  The total priced cost of a design has a closed form for
the piecewise-linear search model with an infinitely steep saturation branch.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .costs import planning_constant
from .scenario import PlanningParams, Scenario, aggregate_rent
from .search import Piecewise


class PlanningError(ValueError):
    pass


class InfeasibleDesignError(PlanningError):
    pass


@dataclass(frozen=True)
class Design:
    theta: float
    k: float
    tag: str = "sweep"

    def __post_init__(self):
        if not 0 <= self.theta <= 1:
            raise PlanningError(f"theta={self.theta} outside [0, 1]")
        if not self.k > 0:
            raise PlanningError(f"k={self.k} must be positive")


@dataclass(frozen=True)
class DesignEval:
    design: Design
    TC: float
    NP: float
    budget: float
    budget_ok: bool
    supply_ok: bool
    reduction: float

    @property
    def feasible(self) -> bool:
        return self.budget_ok and self.supply_ok


def _planning(sc: Scenario) -> PlanningParams:
    if sc.planning is None:
        raise PlanningError("scenario has no planning parameters")
    return sc.planning


def piecewise_model(sc: Scenario) -> Piecewise:
    """The scenario's piecewise search model, or one built from its stored parameters."""
    if isinstance(sc.search, Piecewise):
        return sc.search
    p = sc.search_params
    try:
        return Piecewise(float(p["delta"]), float(p["Delta"]), float(p["omega"]))
    except KeyError:
        raise PlanningError("closed-form planning needs piecewise search parameters delta, Delta, omega") from None


def _pw(sc: Scenario) -> Scenario:
    return sc.with_search(piecewise_model(sc))


def benchmark_theta(sc: Scenario) -> float:
    e, phi = sc.epsilon, sc.phi
    return e * phi / (e * phi + 1 - e)


def rent_total(sc: Scenario) -> float:
    return aggregate_rent(_planning(sc), sc.x_hat)


def budget(sc: Scenario) -> float:
    p = _planning(sc)
    if p.budget is not None:
        return p.budget
    return p.k_b * (p.v_a * benchmark_theta(sc) * sc.x_hat + rent_total(sc))


def benchmark_design(sc: Scenario):
    """AV share proportional to the area AVs need, at the benchmark width; and the budget it costs."""
    return Design(benchmark_theta(sc), _planning(sc).k_b, "benchmark"), budget(sc)


def infrastructure_cost(sc: Scenario, design: Optional[Design] = None) -> float:
    """Upgrade cost of AV area plus land rent, for a design or for the scenario's own supply."""
    p = _planning(sc)
    if design is not None:
        return design.k * (p.v_a * design.theta * sc.x_hat + rent_total(sc))
    s = sc.supply
    if s.is_constant:
        k, t = float(s.k_at(0.0)), float(s.theta_at(0.0))
        return k * (p.v_a * t * sc.x_hat + rent_total(sc))
    pts = list(getattr(s, "xs", ())) or None
    up, _ = quad(lambda u: s.theta_at(u) * s.k_at(u), 0.0, sc.x_hat, points=pts, limit=200)
    land, _ = quad(lambda u: p.rent.at(u, sc.x_hat) * s.k_at(u), 0.0, sc.x_hat, points=pts, limit=200)
    return p.v_a * up + land


def _design_term(sc: Scenario, theta, k):
    """N^2/(k(1-omega)) * (lambda_c (1-e)^2/(1-theta) + phi lambda_a e^2/theta)."""
    w = piecewise_model(sc).omega
    e = sc.epsilon
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        hv = np.where(e < 1, sc.lambda_c * (1 - e) ** 2 / (1 - theta), 0.0)
        av = np.where(e > 0, sc.phi * sc.lambda_a * e**2 / theta, 0.0)
    return sc.N**2 / (np.asarray(k, dtype=float) * (1 - w)) * (hv + av)


def _tc(sc: Scenario, theta, k):
    return planning_constant(_pw(sc)) + _design_term(sc, theta, k)


def _supply_ok(sc: Scenario, theta, k):
    theta = np.asarray(theta, dtype=float)
    k = np.asarray(k, dtype=float)
    av = theta * k * sc.x_hat / sc.phi
    hv = (1 - theta) * k * sc.x_hat
    av_ok = av > sc.N_a if sc.N_a > 0 else av >= 0
    hv_ok = hv > sc.N_c if sc.N_c > 0 else hv >= 0
    return av_ok & hv_ok


def tc_closed_form(design: Design, sc: Scenario) -> DesignEval:
    both = 0 < sc.epsilon < 1
    if both and design.theta in (0.0, 1.0):
        raise InfeasibleDesignError("theta must lie strictly inside (0, 1) when both classes are present")
    b_design, nb = benchmark_design(sc)
    tc = float(_tc(sc, design.theta, design.k))
    tc_b = float(_tc(sc, b_design.theta, b_design.k))
    np_cost = infrastructure_cost(sc, design)
    return DesignEval(
        design, tc, np_cost, nb,
        budget_ok=bool(np_cost <= nb * (1 + 1e-12)),
        supply_ok=bool(_supply_ok(sc, design.theta, design.k)),
        reduction=(tc_b - tc) / tc_b,
    )


def mu(sc: Scenario) -> float:
    return sc.lambda_a / sc.lambda_c


def first_best(sc: Scenario) -> Design:
    """Budget-constrained optimum with free width: the budget is spent in full."""
    p = _planning(sc)
    L = rent_total(sc)
    if L <= 0:
        raise PlanningError("first-best design needs a positive aggregate land rent")
    V = p.v_a * sc.x_hat
    e = sc.epsilon
    r = math.sqrt(mu(sc) * sc.phi) * e
    theta = r / (r + (1 - e) * math.sqrt((L + V) / L)) if e > 0 else 0.0
    return Design(theta, budget(sc) / (V * theta + L), "first_best")


def second_best(sc: Scenario) -> Design:
    """Optimum when the width may not exceed the benchmark width."""
    p = _planning(sc)
    e = sc.epsilon
    r = math.sqrt(mu(sc) * sc.phi) * e
    theta = r / (r + 1 - e) if e > 0 else 0.0
    return Design(theta, p.k_b, "second_best")


def first_best_min_value(sc: Scenario) -> float:
    p = _planning(sc)
    L = rent_total(sc)
    V = p.v_a * sc.x_hat
    e = sc.epsilon
    w = piecewise_model(sc).omega
    inner = sc.lambda_c * (math.sqrt(L) * (1 - e) + math.sqrt((V + L) * mu(sc) * sc.phi) * e) ** 2
    return planning_constant(_pw(sc)) + sc.N**2 / ((1 - w) * budget(sc)) * inner


def second_best_min_value(sc: Scenario) -> float:
    e = sc.epsilon
    w = piecewise_model(sc).omega
    inner = sc.lambda_c * ((1 - e) + math.sqrt(mu(sc) * sc.phi) * e) ** 2
    return planning_constant(_pw(sc)) + sc.N**2 / (_planning(sc).k_b * (1 - w)) * inner


def reductions(sc: Scenario) -> dict:
    """Exact relative cost reductions between benchmark, second-best and first-best."""
    tb = tc_closed_form(benchmark_design(sc)[0], sc).TC
    t1 = tc_closed_form(first_best(sc), sc).TC
    t2 = tc_closed_form(second_best(sc), sc).TC
    return {
        "first_best": (tb - t1) / tb,
        "second_best": (tb - t2) / tb,
        "second_to_first": (t2 - t1) / t2,
    }


def reduction_first_best_direct(sc: Scenario) -> float:
    """Benchmark-to-first-best reduction written directly in the model parameters."""
    p = _planning(sc)
    L = rent_total(sc)
    A = (p.v_a * sc.x_hat + L) / L
    e, phi, m = sc.epsilon, sc.phi, mu(sc)
    w = piecewise_model(sc).omega
    num = (1 - e) * e * (math.sqrt(A * phi) - math.sqrt(m)) ** 2 * L
    den = ((1 - e + e * m) * (1 - e + e * A * phi) * L
           + (1 - w) * planning_constant(_pw(sc)) * budget(sc) / (sc.lambda_c * sc.N**2))
    return num / den


def bound_constants(sc: Scenario) -> dict:
    p = _planning(sc)
    L = rent_total(sc)
    V = p.v_a * sc.x_hat
    sp, sm = math.sqrt(sc.phi), math.sqrt(mu(sc))
    a, b = math.sqrt(V + L) * sp, math.sqrt(L) * sm
    tb = benchmark_theta(sc)
    return {
        "l52": ((a - b) / (a + b)) ** 2,
        "l53": ((sp - sm) / (sp + sm)) ** 2,
        "l54": V * tb / (L + V * tb),
    }


def reduction_bounds(sc: Scenario, eps_grid: Optional[Sequence[float]] = None) -> dict:
    """Upper bounds on the reductions, and the largest exact reductions over a penetration grid.

    The budget follows the benchmark at each penetration unless the scenario
    fixes it explicitly.
    """
    if eps_grid is None:
        eps_grid = np.round(np.arange(0.005, 1.0, 0.005), 6)
    bounds = bound_constants(sc)
    p = _planning(sc)
    L = rent_total(sc)
    A = (p.v_a * sc.x_hat + L) / L
    out = dict(bounds)
    out["eps_star_l52"] = 1.0 / (1.0 + math.sqrt(A * sc.phi * mu(sc)))
    out["eps_star_l53"] = 1.0 / (1.0 + math.sqrt(sc.phi * mu(sc)))
    rows = []
    for e in eps_grid:
        r = reductions(replace(sc, epsilon=float(e)))
        rows.append((float(e), r["first_best"], r["second_best"], r["second_to_first"]))
    arr = np.array(rows)
    for col, key in ((1, "l52"), (2, "l53"), (3, "l54")):
        i = int(np.argmax(arr[:, col]))
        out[f"max_{key}"] = float(arr[i, col])
        out[f"argmax_{key}"] = float(arr[i, 0])
    out["grid"] = arr
    return out


def budget_saving(sc: Scenario):
    """Budget left unspent by the second-best design: (amount, fraction of budget)."""
    p = _planning(sc)
    amount = p.k_b * p.v_a * (benchmark_theta(sc) - second_best(sc).theta) * sc.x_hat
    return amount, amount / budget(sc)


@dataclass(frozen=True, eq=False)
class SweepResult:
    thetas: np.ndarray
    ks: np.ndarray
    TC: np.ndarray
    NP: np.ndarray
    budget_ok: np.ndarray
    supply_ok: np.ndarray
    reduction: np.ndarray
    budget: float

    @property
    def feasible(self) -> np.ndarray:
        return self.budget_ok & self.supply_ok

    @property
    def argmin(self):
        """(i, j) of the cheapest feasible cell, or None when no cell is feasible."""
        f = self.feasible
        if not f.any():
            return None
        masked = np.where(f, self.TC, np.inf)
        i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
        return int(i), int(j)

    def rows(self):
        for i, t in enumerate(self.thetas):
            for j, k in enumerate(self.ks):
                yield (float(t), float(k), float(self.TC[i, j]), float(self.NP[i, j]),
                       bool(self.feasible[i, j]), float(self.reduction[i, j]))


def sweep_threads() -> int:
    try:
        return max(1, int(os.environ.get("CURBFLOW_THREADS", "1")))
    except ValueError:
        return 1


def sweep(sc: Scenario, thetas: Sequence[float], ks: Sequence[float],
          threads: Optional[int] = None) -> SweepResult:
    thetas = np.asarray(thetas, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if thetas.size == 0 or ks.size == 0:
        raise PlanningError("sweep grids must be nonempty")
    if np.any((thetas < 0) | (thetas > 1)) or np.any(ks <= 0):
        raise PlanningError("sweep grids need theta in [0, 1] and k > 0")
    if 0 < sc.epsilon < 1 and np.any((thetas == 0) | (thetas == 1)):
        raise InfeasibleDesignError("theta grid must exclude 0 and 1 when both classes are present")
    b_design, nb = benchmark_design(sc)
    tc_b = float(_tc(sc, b_design.theta, b_design.k))
    L = rent_total(sc)
    v_a = _planning(sc).v_a

    def row_block(idx):
        T, K = np.meshgrid(thetas[idx], ks, indexing="ij")
        tc = _tc(sc, T, K)
        npc = K * (v_a * T * sc.x_hat + L)
        return idx, tc, npc, _supply_ok(sc, T, K)

    n = threads or sweep_threads()
    blocks = np.array_split(np.arange(thetas.size), min(n, thetas.size))
    TC = np.empty((thetas.size, ks.size))
    NP = np.empty_like(TC)
    SUP = np.empty(TC.shape, dtype=bool)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(row_block, blocks))
    else:
        parts = [row_block(b) for b in blocks]
    for idx, tc, npc, sup in parts:
        TC[idx], NP[idx], SUP[idx] = tc, npc, sup
    return SweepResult(thetas, ks, TC, NP, NP <= nb * (1 + 1e-12), SUP, (tc_b - TC) / tc_b, nb)
