"""Access, search, cruising, generalized and marginal parking costs.

Profile functions evaluate a cost over a solution's grid; the point functions
interpolate those profiles.  Integrals over a grid use the trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .scenario import Scenario


class SpanError(ValueError):
    pass


@dataclass(frozen=True)
class CostBreakdown:
    cls: str
    access: float
    search: float
    cruise: float

    @property
    def total(self) -> float:
        return self.access + self.search + self.cruise


def inner_mass(sol) -> np.ndarray:
    """Vehicles parked in [0, x] at each grid point."""
    if len(sol.xs) < 2:
        return np.zeros_like(sol.xs)
    return cumulative_trapezoid(sol.n, sol.xs, initial=0.0)


def outer_mass(sol) -> np.ndarray:
    """Vehicles parked in [x, span] at each grid point."""
    inner = inner_mass(sol)
    return inner[-1] - inner


def cruising_profile(sol) -> np.ndarray:
    sc: Scenario = sol.scenario
    if sol.cls == "a":
        return sc.beta_c * sc.N_c + sc.beta_a * inner_mass(sol)
    return sc.beta_c * outer_mass(sol)


def search_profile(sol) -> np.ndarray:
    model = sol.scenario.search
    return model.time_of_occupancy(sol.n / sol.m)


def generalized_profile(sol) -> np.ndarray:
    lam, _, gam = sol.scenario.coeffs(sol.cls)
    return lam * sol.xs + gam * search_profile(sol) + cruising_profile(sol)


def marginal_profile(sol) -> np.ndarray:
    """lambda x + gamma (S + n dS/dn); cruising is excluded."""
    lam, _, gam = sol.scenario.coeffs(sol.cls)
    return lam * sol.xs + gam * sol.scenario.search.marginal_of_occupancy(sol.n / sol.m)


def _at(sol, profile: np.ndarray, x: float) -> float:
    if x < -1e-12 or x > sol.span * (1 + 1e-12) + 1e-12:
        raise SpanError(f"x={x} lies outside the used span [0, {sol.span}]")
    return float(np.interp(x, sol.xs, profile))


def cruising_cost(sol, x: float) -> float:
    return _at(sol, cruising_profile(sol), x)


def generalized_cost(sol, x: float) -> CostBreakdown:
    lam, _, gam = sol.scenario.coeffs(sol.cls)
    return CostBreakdown(
        sol.cls,
        access=lam * x,
        search=gam * _at(sol, search_profile(sol), x),
        cruise=cruising_cost(sol, x),
    )


def marginal_cost(sol, x: float) -> float:
    return _at(sol, marginal_profile(sol), x)


def total_cruising_cost(sc: Scenario) -> float:
    """Total cruising delay of all travellers; independent of where they park."""
    return 0.5 * (sc.beta_c * (1 - sc.epsilon**2) + sc.beta_a * sc.epsilon**2) * sc.N**2


def class_cruising_cost(sc: Scenario, cls: str) -> float:
    if cls == "c":
        return 0.5 * sc.beta_c * sc.N_c**2
    return sc.beta_c * sc.N_c * sc.N_a + 0.5 * sc.beta_a * sc.N_a**2


def integrated_cruising_cost(sol) -> float:
    """Trapezoid integral of n(x) c(x) over the solution grid."""
    if len(sol.xs) < 2:
        return 0.0
    return float(np.trapezoid(sol.n * cruising_profile(sol), sol.xs))


def planning_constant(sc: Scenario) -> float:
    """Search and cruising part of the priced total cost, independent of {theta, k}."""
    model = sc.search
    if model.kind != "piecewise":
        raise ValueError("planning constant is defined for the piecewise search model")
    search_part = (sc.gamma_c * (1 - sc.epsilon) + sc.gamma_a * sc.epsilon) * model.delta * (1 - model.omega) * sc.N
    return search_part + total_cruising_cost(sc)


def total_parking_cost(sol, include_cruising: bool = True) -> float:
    """Integral of P(x) n(x) (optionally without the cruising part) over the used span."""
    if len(sol.xs) < 2:
        return 0.0
    lam, _, gam = sol.scenario.coeffs(sol.cls)
    unit = lam * sol.xs + gam * search_profile(sol)
    if include_cruising:
        unit = unit + cruising_profile(sol)
    return float(np.trapezoid(unit * sol.n, sol.xs))
