"""Parking-spot search time models.

Both models depend on the occupancy n/m only, so every quantity here can be
written either in terms of (n, m) or of the occupancy rho = n/m.  The
functions accept floats or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

# Solvers keep binomial occupancy at or below this value.
POLE_GUARD = 1.0 - 1e-9


class SearchDomainError(ValueError):
    pass


class SearchPartials(NamedTuple):
    dn: ArrayLike
    dnn: ArrayLike
    dm: ArrayLike
    dnm: ArrayLike


def _check(n, m, strict):
    n_arr = np.asarray(n, dtype=float)
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr <= 0):
        raise SearchDomainError("parking supply m must be positive")
    if np.any(n_arr < 0):
        raise SearchDomainError("parked density n must be nonnegative")
    rho = n_arr / m_arr
    if strict and np.any(rho >= 1):
        raise SearchDomainError("binomial search time is unbounded at occupancy >= 1")
    if not strict and np.any(rho > 1 + 1e-12):
        raise SearchDomainError("occupancy above 1")


@dataclass(frozen=True)
class Binomial:
    """S = m / (m - n)."""

    kind = "binomial"

    @property
    def s_min(self) -> float:
        return 1.0

    def time(self, n, m):
        _check(n, m, strict=True)
        return m / (m - n)

    def partials(self, n, m) -> SearchPartials:
        _check(n, m, strict=True)
        return self.raw_partials(n, m)

    def raw_partials(self, n, m) -> SearchPartials:
        d = m - n
        return SearchPartials(m / d**2, 2 * m / d**3, -n / d**2, -(m + n) / d**3)

    # occupancy forms, used by the binned oracle and the marginal cost
    def time_of_occupancy(self, rho):
        return 1.0 / (1.0 - rho)

    def marginal_of_occupancy(self, rho):
        """S + n dS/dn as a function of occupancy."""
        return 1.0 / (1.0 - rho) ** 2

    def occupancy_at_time(self, s):
        s = np.maximum(s, 1.0)
        return 1.0 - 1.0 / s

    def occupancy_at_marginal(self, g):
        g = np.maximum(g, 1.0)
        return 1.0 - 1.0 / np.sqrt(g)


@dataclass(frozen=True)
class Piecewise:
    """Linear search time up to occupancy 1 - omega, then a steep branch of slope Delta."""

    delta: float
    Delta: float
    omega: float

    kind = "piecewise"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.Delta > self.delta:
            raise ValueError("Delta must exceed delta")
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")

    @property
    def s_min(self) -> float:
        return 0.0

    @property
    def kink(self) -> float:
        return 1.0 - self.omega

    def time(self, n, m):
        _check(n, m, strict=False)
        return self.time_of_occupancy(np.asarray(n) / np.asarray(m) if _is_array(n, m) else n / m)

    def time_of_occupancy(self, rho):
        k = self.kink
        if np.ndim(rho) == 0:
            rho = float(rho)
            if rho <= k:
                return self.delta * rho
            return self.delta * k + self.Delta * (rho - k)
        return np.where(rho <= k, self.delta * rho, self.delta * k + self.Delta * (rho - k))

    def slope(self, rho):
        """dS/d(rho); left-branch value at the kink."""
        if np.ndim(rho) == 0:
            return self.delta if rho <= self.kink else self.Delta
        return np.where(rho <= self.kink, self.delta, self.Delta)

    def partials(self, n, m) -> SearchPartials:
        _check(n, m, strict=False)
        return self.raw_partials(n, m)

    def raw_partials(self, n, m) -> SearchPartials:
        rho = np.asarray(n) / np.asarray(m) if _is_array(n, m) else n / m
        sn = self.slope(rho) / m
        return SearchPartials(sn, 0.0 * sn, -sn * rho, -sn / m)

    def marginal_of_occupancy(self, rho):
        """S + rho dS/drho, left-branch value at the kink."""
        return self.time_of_occupancy(rho) + rho * self.slope(rho)

    def marginal_right_of_kink(self) -> float:
        return self.delta * self.kink + self.Delta * self.kink

    def occupancy_at_time(self, s):
        k = self.kink
        s = np.maximum(s, 0.0)
        s_k = self.delta * k
        return np.where(s <= s_k, s / self.delta, k + (s - s_k) / self.Delta)

    def occupancy_at_marginal(self, g):
        """Generalized inverse of the marginal map; the jump at the kink maps to the kink."""
        k = self.kink
        g = np.maximum(g, 0.0)
        lo = 2 * self.delta * k
        hi = self.marginal_right_of_kink()
        upper = (g - self.delta * k + self.Delta * k) / (2 * self.Delta)
        return np.where(g <= lo, g / (2 * self.delta), np.where(g <= hi, k, upper))


SearchModel = Union[Binomial, Piecewise]


def _is_array(*xs) -> bool:
    return any(isinstance(x, np.ndarray) for x in xs)


def search_time(model: SearchModel, n, m):
    return model.time(n, m)


def search_partials(model: SearchModel, n, m) -> SearchPartials:
    return model.partials(n, m)


def search_model_from_dict(d: dict) -> SearchModel:
    kind = d.get("type")
    if kind == "binomial":
        return Binomial()
    if kind == "piecewise":
        try:
            return Piecewise(float(d["delta"]), float(d["Delta"]), float(d["omega"]))
        except KeyError as exc:
            raise ValueError(f"piecewise search model needs key {exc.args[0]!r}") from None
    raise ValueError(f"unknown search model type {kind!r}")
