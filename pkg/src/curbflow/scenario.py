"""Problem instances: demand, cost coefficients, parking supply and planning data."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from .search import Binomial, Piecewise, SearchModel, search_model_from_dict

# Samples used to estimate sup m_c(x) for the HV outward-preference check.
SUPPLY_SAMPLES = 2001


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario data; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------------------
# supply profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSupply:
    k: float
    theta: float
    x_hat: float

    def k_at(self, x):
        return self.k + 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else self.k

    def theta_at(self, x):
        return self.theta + 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else self.theta

    def dk_at(self, x):
        return 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0

    def dtheta_at(self, x):
        return 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0

    @property
    def is_constant(self) -> bool:
        return True


@dataclass(frozen=True)
class SigmoidSupply:
    """Constant width k with AV share theta(x) = eps_cap / (1 + exp(-steepness (x - midpoint)))."""

    k: float
    eps_cap: float
    steepness: float
    midpoint: float
    x_hat: float

    def k_at(self, x):
        return self.k + 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else self.k

    def theta_at(self, x):
        z = -self.steepness * (np.asarray(x, dtype=float) - self.midpoint)
        t = self.eps_cap / (1.0 + np.exp(z))
        return t if np.ndim(x) else float(t)

    def dk_at(self, x):
        return 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0

    def dtheta_at(self, x):
        t = self.theta_at(x)
        return self.steepness * t * (1.0 - t / self.eps_cap)

    @property
    def is_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class TabulatedSupply:
    """Piecewise-linear (k, theta) through breakpoints, held constant past the last one."""

    xs: tuple
    ks: tuple
    thetas: tuple
    x_hat: float

    def k_at(self, x):
        v = np.interp(x, self.xs, self.ks)
        return v if np.ndim(x) else float(v)

    def theta_at(self, x):
        v = np.interp(x, self.xs, self.thetas)
        return v if np.ndim(x) else float(v)

    def _slope(self, x, vals):
        xs = np.asarray(self.xs)
        slopes = np.diff(vals) / np.diff(xs)
        idx = np.searchsorted(xs, x, side="right") - 1
        inside = (idx >= 0) & (idx < len(slopes))
        out = np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)
        return out if np.ndim(x) else float(out)

    def dk_at(self, x):
        return self._slope(x, np.asarray(self.ks))

    def dtheta_at(self, x):
        return self._slope(x, np.asarray(self.thetas))

    @property
    def is_constant(self) -> bool:
        return len(set(self.ks)) == 1 and len(set(self.thetas)) == 1


SupplyProfile = Union[ConstantSupply, SigmoidSupply, TabulatedSupply]


class SupplyPoint(NamedTuple):
    k: float
    theta: float
    m_a: float
    m_c: float


def supply_at(profile: SupplyProfile, x, phi: float) -> SupplyPoint:
    """Parking area, AV share and per-class space counts at ``x``."""
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(x) > profile.x_hat * (1 + 1e-12)):
        raise ScenarioError("x", f"location outside the supply span [0, {profile.x_hat}]")
    k = profile.k_at(x)
    theta = profile.theta_at(x)
    return SupplyPoint(k, theta, theta * k / phi, (1 - theta) * k)


# ---------------------------------------------------------------------------
# planning data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rent:
    """Land rent per unit area: ``linear`` decays from L0 at the CBD to 0 at x_hat."""

    kind: str
    L0: float

    def at(self, x, x_hat: float):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            v = self.L0 * (1 - x / x_hat)
        else:
            v = self.L0 + 0.0 * x
        return v if v.ndim else float(v)


@dataclass(frozen=True)
class PlanningParams:
    v_a: float
    rent: Rent
    k_b: float
    budget: Optional[float] = None


def aggregate_rent(planning: PlanningParams, x_hat: float) -> float:
    """Integral of the land rent over [0, x_hat]."""
    if planning.rent.kind == "linear":
        return 0.5 * planning.rent.L0 * x_hat
    return planning.rent.L0 * x_hat


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    N: float
    epsilon: float
    phi: float
    lambda_c: float
    lambda_a: float
    beta_c: float
    beta_a: float
    gamma_c: float
    gamma_a: float
    search: SearchModel
    supply: SupplyProfile
    planning: Optional[PlanningParams] = None
    # raw piecewise parameters kept so a binomial scenario can be re-run as piecewise
    search_params: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def N_a(self) -> float:
        return self.epsilon * self.N

    @property
    def N_c(self) -> float:
        return (1 - self.epsilon) * self.N

    @property
    def x_hat(self) -> float:
        return self.supply.x_hat

    def demand(self, cls: str) -> float:
        return self.N_a if cls == "a" else self.N_c

    def coeffs(self, cls: str):
        """(lambda, beta, gamma) for class ``a`` or ``c``."""
        if cls == "a":
            return self.lambda_a, self.beta_a, self.gamma_a
        return self.lambda_c, self.beta_c, self.gamma_c

    def m(self, cls: str, x):
        k = self.supply.k_at(x)
        t = self.supply.theta_at(x)
        return t * k / self.phi if cls == "a" else (1 - t) * k

    def dm(self, cls: str, x):
        k = self.supply.k_at(x)
        t = self.supply.theta_at(x)
        dk = self.supply.dk_at(x)
        dt = self.supply.dtheta_at(x)
        if cls == "a":
            return (dt * k + t * dk) / self.phi
        return -dt * k + (1 - t) * dk

    def with_search(self, search: SearchModel) -> "Scenario":
        return replace(self, search=search)

    def without_cruising(self) -> "Scenario":
        return replace(self, beta_a=0.0, beta_c=0.0)


def _num(d: dict, key: str, where: str = "") -> float:
    name = f"{where}.{key}" if where else key
    if key not in d:
        raise ScenarioError(name, "missing required key")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(name, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ScenarioError(name, "must be finite")
    return float(v)


def _supply_from_dict(d: dict) -> SupplyProfile:
    kind = d.get("type")
    x_hat = _num(d, "x_hat", "supply")
    if x_hat <= 0:
        raise ScenarioError("supply.x_hat", "must be positive")
    if kind == "constant":
        return ConstantSupply(_num(d, "k", "supply"), _num(d, "theta", "supply"), x_hat)
    if kind == "sigmoid":
        return SigmoidSupply(
            _num(d, "k", "supply"),
            _num(d, "eps_cap", "supply"),
            _num(d, "steepness", "supply"),
            _num(d, "midpoint", "supply"),
            x_hat,
        )
    if kind == "tabulated":
        rows = d.get("breakpoints")
        if not isinstance(rows, list) or len(rows) < 2:
            raise ScenarioError("supply.breakpoints", "need at least two [x, k, theta] rows")
        try:
            xs, ks, ts = zip(*[(float(a), float(b), float(c)) for a, b, c in rows])
        except (TypeError, ValueError):
            raise ScenarioError("supply.breakpoints", "rows must be [x, k, theta]") from None
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ScenarioError("supply.breakpoints", "x values must be strictly increasing")
        return TabulatedSupply(xs, ks, ts, x_hat)
    raise ScenarioError("supply.type", f"unknown supply type {kind!r}")


def _planning_from_dict(d: dict) -> PlanningParams:
    rent = d.get("rent")
    if not isinstance(rent, dict):
        raise ScenarioError("planning.rent", "missing rent profile")
    if rent.get("type") not in ("linear", "constant"):
        raise ScenarioError("planning.rent.type", f"unknown rent type {rent.get('type')!r}")
    budget = d.get("budget")
    if budget is not None:
        budget = _num(d, "budget", "planning")
    return PlanningParams(
        v_a=_num(d, "v_a", "planning"),
        rent=Rent(rent["type"], _num(rent, "L0", "planning.rent")),
        k_b=_num(d, "k_b", "planning"),
        budget=budget,
    )


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    search_d = d.get("search")
    if not isinstance(search_d, dict):
        raise ScenarioError("search", "missing search model")
    try:
        search = search_model_from_dict(search_d)
    except ValueError as exc:
        raise ScenarioError("search", str(exc)) from None
    supply_d = d.get("supply")
    if not isinstance(supply_d, dict):
        raise ScenarioError("supply", "missing supply profile")
    planning = d.get("planning")
    sc = Scenario(
        N=_num(d, "N"),
        epsilon=_num(d, "epsilon"),
        phi=_num(d, "phi"),
        lambda_c=_num(d, "lambda_c"),
        lambda_a=_num(d, "lambda_a"),
        beta_c=_num(d, "beta_c"),
        beta_a=_num(d, "beta_a"),
        gamma_c=_num(d, "gamma_c"),
        gamma_a=_num(d, "gamma_a"),
        search=search,
        supply=_supply_from_dict(supply_d),
        planning=_planning_from_dict(planning) if planning is not None else None,
        search_params={k: v for k, v in search_d.items() if k != "type"},
    )
    validate(sc)
    return sc


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"malformed JSON in {path}: {exc}") from None
    return scenario_from_dict(data)


def max_hv_spaces(sc: Scenario) -> float:
    xs = np.linspace(0.0, sc.x_hat, SUPPLY_SAMPLES)
    return float(np.max(sc.m("c", xs)))


def validate(sc: Scenario) -> None:
    if not sc.N > 0:
        raise ScenarioError("N", "total demand must be positive")
    if not 0 <= sc.epsilon <= 1:
        raise ScenarioError("epsilon", "AV penetration must lie in [0, 1]")
    if not 0 < sc.phi <= 1:
        raise ScenarioError("phi", "AV space size must lie in (0, 1]")
    for name in ("lambda_c", "lambda_a"):
        if not getattr(sc, name) > 0:
            raise ScenarioError(name, "unit distance cost must be positive")
    for name in ("beta_c", "beta_a", "gamma_c", "gamma_a"):
        if getattr(sc, name) < 0:
            raise ScenarioError(name, "must be nonnegative")
    if not sc.gamma_a > 0:
        raise ScenarioError("gamma_a", "must be positive")
    if sc.gamma_a > sc.gamma_c:
        raise ScenarioError("gamma_a", "must not exceed gamma_c")
    if sc.beta_a > sc.beta_c:
        raise ScenarioError("beta_a", "must not exceed beta_c")
    if sc.lambda_c <= sc.lambda_a:
        warnings.warn("lambda_c <= lambda_a: walking is not costlier than self-driving", stacklevel=2)

    xs = np.linspace(0.0, sc.x_hat, SUPPLY_SAMPLES)
    k = np.asarray(sc.supply.k_at(xs))
    t = np.asarray(sc.supply.theta_at(xs))
    if np.any(k <= 0):
        raise ScenarioError("supply.k", "parking area per km must be positive")
    if np.any((t < 0) | (t > 1)):
        raise ScenarioError("supply.theta", "AV area share must lie in [0, 1]")
    if isinstance(sc.supply, SigmoidSupply) and not 0 <= sc.supply.eps_cap <= 1:
        raise ScenarioError("supply.eps_cap", "must lie in [0, 1]")

    # HVs must prefer parking close to the CBD: beta_c * sup m_c < lambda_c
    if sc.N_c > 0 and not sc.beta_c * max_hv_spaces(sc) < sc.lambda_c:
        raise ScenarioError(
            "beta_c", "cruising coefficient too large: need beta_c * max m_c(x) < lambda_c"
        )

    p = sc.planning
    if p is not None:
        if p.v_a < 0:
            raise ScenarioError("planning.v_a", "must be nonnegative")
        if not p.k_b > 0:
            raise ScenarioError("planning.k_b", "must be positive")
        if p.rent.L0 < 0:
            raise ScenarioError("planning.rent.L0", "rent must be nonnegative")
        if p.budget is not None and not p.budget > 0:
            raise ScenarioError("planning.budget", "must be positive")


class SupplyReport(NamedTuple):
    av_spaces: float
    hv_spaces: float
    av_margin: float
    hv_margin: float

    @property
    def av_ok(self) -> bool:
        return self.av_margin > 0

    @property
    def hv_ok(self) -> bool:
        return self.hv_margin > 0

    @property
    def feasible(self) -> bool:
        return self.av_ok and self.hv_ok


def total_spaces(sc: Scenario, cls: str) -> float:
    if sc.supply.is_constant:
        return float(sc.m(cls, 0.0)) * sc.x_hat
    from scipy.integrate import quad

    pts = list(getattr(sc.supply, "xs", ()))
    val, _ = quad(lambda u: sc.m(cls, u), 0.0, sc.x_hat, limit=200, points=pts or None)
    return val


def check_supply_sufficiency(sc: Scenario) -> SupplyReport:
    """Compare total spaces per class on [0, x_hat] with class demand (strict)."""
    av = total_spaces(sc, "a")
    hv = total_spaces(sc, "c")
    return SupplyReport(av, hv, av - sc.N_a, hv - sc.N_c)


__all__ = [
    "Binomial",
    "ConstantSupply",
    "Piecewise",
    "PlanningParams",
    "Rent",
    "Scenario",
    "ScenarioError",
    "SigmoidSupply",
    "SupplyPoint",
    "SupplyReport",
    "TabulatedSupply",
    "aggregate_rent",
    "check_supply_sufficiency",
    "load_scenario",
    "scenario_from_dict",
    "supply_at",
    "validate",
]
