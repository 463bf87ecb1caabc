"""Location prices that decentralize the optimum, and priced/unpriced cost totals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import costs
from .scenario import Scenario
from .solver import OPTIMUM, SpatialSolution, plateau_mask, solve_equilibrium, solve_optimum


@dataclass(frozen=True, eq=False)
class PricingSchedule:
    xs_a: np.ndarray
    tau_a: np.ndarray
    xs_c: np.ndarray
    tau_c: np.ndarray
    TP_min: float
    TC: float

    @property
    def net_revenue(self) -> float:
        return self.TC - self.TP_min

    def on_grid(self, xs: np.ndarray):
        """Prices on a common grid; zero beyond each class's span."""
        def one(x_own, tau):
            if len(x_own) < 2:
                return np.zeros_like(xs)
            return np.where(xs <= x_own[-1], np.interp(xs, x_own, tau), 0.0)

        return one(self.xs_a, self.tau_a), one(self.xs_c, self.tau_c)


def price_profile(sol: SpatialSolution) -> np.ndarray:
    """Optimal price on the solution grid.

    AVs pay for the cruising delay they impose on AVs parking further out;
    HVs are credited for the delay they spare HVs parking further in.  Both
    pay the search externality gamma * n * dS/dn.
    """
    sc = sol.scenario
    _, beta, gam = sc.coeffs(sol.cls)
    lam = sc.coeffs(sol.cls)[0]
    rho = sol.n / sol.m
    marginal = sc.search.marginal_of_occupancy(rho)
    # on the piecewise kink the marginal is set-valued; use the element that supports the level
    plateau = plateau_mask(sol)
    marginal[plateau] = (sol.level - lam * sol.xs[plateau]) / gam
    search_ext = gam * (marginal - sc.search.time_of_occupancy(rho))
    outer = costs.outer_mass(sol)
    sign = 1.0 if sol.cls == "a" else -1.0
    tau = sign * beta * outer + search_ext
    if len(tau):
        tau[-1] = 0.0
    return tau


def min_total_parking_cost(sol_a: SpatialSolution, sol_c: SpatialSolution, sc: Scenario) -> float:
    """Total cost without price transfers at the given distributions; cruising by its closed form."""
    return (costs.total_parking_cost(sol_a, include_cruising=False)
            + costs.total_parking_cost(sol_c, include_cruising=False)
            + costs.total_cruising_cost(sc))


def priced_total_cost(sol_a: SpatialSolution, sol_c: SpatialSolution, sc: Scenario) -> float:
    """Total cost travellers perceive under optimal prices: MP_a N_a + MP_c N_c + TCr."""
    return sol_a.level * sc.N_a + sol_c.level * sc.N_c + costs.total_cruising_cost(sc)


def optimal_prices(sol_a: SpatialSolution, sol_c: SpatialSolution, sc: Scenario) -> PricingSchedule:
    for s, c in ((sol_a, "a"), (sol_c, "c")):
        if s.mode != OPTIMUM:
            raise ValueError(f"prices need optimum solutions, got {s.mode} for class {c}")
        if s.cls != c:
            raise ValueError(f"expected a class-{c} solution, got class {s.cls}")
    return PricingSchedule(
        sol_a.xs, price_profile(sol_a), sol_c.xs, price_profile(sol_c),
        TP_min=min_total_parking_cost(sol_a, sol_c, sc),
        TC=priced_total_cost(sol_a, sol_c, sc),
    )


def unpriced_vs_priced_reduction(sc: Scenario, equilibria: Optional[tuple] = None,
                                 optima: Optional[tuple] = None) -> float:
    """Relative drop in total cost, price transfers excluded, from equilibrium to optimum."""
    eq_a, eq_c = equilibria or (solve_equilibrium(sc, "a"), solve_equilibrium(sc, "c"))
    op_a, op_c = optima or (solve_optimum(sc, "a"), solve_optimum(sc, "c"))
    tp_eq = costs.total_parking_cost(eq_a) + costs.total_parking_cost(eq_c)
    tp_opt = min_total_parking_cost(op_a, op_c, sc)
    return (tp_eq - tp_opt) / tp_eq
