from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curbflow import costs, oracle

from conftest import scenario, solved

CASES = [(name, search, cls) for name in ("base_theta050", "base_theta025", "sigmoid")
         for search in ("", "piecewise") for cls in "ac"]


@pytest.mark.parametrize("name,search,cls", CASES)
def test_binned_optimum_matches_ode(name, search, cls):
    sc = scenario(name, search)
    ode = solved(name, search, cls, "optimum")
    b = oracle.binned_optimum(sc, cls, 2000)
    tp = costs.total_parking_cost(ode, include_cruising=False)
    assert b.objective == pytest.approx(tp, rel=5e-3)
    assert b.residuals["kkt_spread"] <= 1e-3 * b.level
    assert b.residuals["kkt_slack"] <= 1e-3 * b.level
    assert b.residuals["objective_trace_monotone"]
    assert b.mass == pytest.approx(sc.demand(cls), rel=1e-6)
    assert np.all(b.n >= 0) and np.all(b.n <= b.m)
    fd, checked = oracle.finite_difference_check(sc, cls, b)
    assert checked and fd <= 1e-4
    assert oracle.cruising_total(sc, b) == pytest.approx(costs.class_cruising_cost(sc, cls), rel=5e-3)


def test_piecewise_av_span_matches_closed_form():
    sc = scenario("base_theta050", "piecewise")
    b = oracle.binned_optimum(sc, "a", 2000)
    assert b.span == pytest.approx(np.sqrt(1.28), rel=0.02)


@pytest.mark.parametrize("search", ["", "piecewise"])
@pytest.mark.parametrize("cls", "ac")
def test_binned_equilibrium_matches_ode(search, cls):
    sc = scenario("base_theta050", search)
    e = oracle.binned_equilibrium(sc, cls, 2000)
    assert e.level == pytest.approx(solved("base_theta050", search, cls, "equilibrium").level, rel=0.01)
    assert e.mass == pytest.approx(sc.demand(cls), rel=1e-6)
    assert e.residuals["cost_spread"] <= 1e-6 * e.level


def test_equilibrium_without_cruising_needs_one_pass(base):
    e = oracle.binned_equilibrium(base.without_cruising(), "a", 500)
    # one pass to compute, one to confirm nothing moved
    assert e.residuals["passes"] <= 2


def test_equilibrium_independent_of_start(base):
    a = oracle.binned_equilibrium(base, "c", 1000, start=0.0)
    b = oracle.binned_equilibrium(base, "c", 1000, start=5000.0)
    assert a.level == pytest.approx(b.level, abs=1e-4)


def test_optimum_independent_of_start(base):
    a = oracle.binned_optimum(base, "a", 500)
    x = (np.arange(500) + 0.5) * a.h
    b = oracle.binned_optimum(base, "a", 500, n0=np.exp(-x))
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_zero_demand(base):
    hv = replace(base, epsilon=0.0)
    b = oracle.binned_optimum(hv, "a", 200)
    assert b.objective == 0.0 and not b.n.any()
    assert oracle.binned_equilibrium(hv, "a", 200).mass == 0.0


def test_too_few_bins(base):
    with pytest.raises(oracle.OracleError):
        oracle.binned_optimum(base, "a", 5)


def test_finite_difference_edge_cases():
    sc = scenario("base_theta050", "piecewise")
    b = oracle.binned_optimum(sc, "c", 1000)
    empty = int(np.nonzero(b.n == 0)[0][0])
    r = oracle.finite_difference_marginal(sc, "c", b, empty)
    assert r.one_sided
    assert r.analytic == pytest.approx(sc.lambda_c * b.x[empty] + sc.gamma_c * sc.search.s_min)
    kink = int(np.nonzero(np.isclose(b.n / b.m, sc.search.kink, atol=1e-9))[0][0])
    assert oracle.finite_difference_marginal(sc, "c", b, kink).at_kink


@settings(max_examples=50, deadline=None)
@given(y=st.lists(st.floats(-50, 150), min_size=3, max_size=30),
       w=st.floats(0.1, 10.0), frac=st.floats(0.05, 0.95))
def test_projection_is_feasible_and_optimal(y, w, frac):
    y = np.array(y)
    k = len(y)
    lo, hi = np.zeros(k), np.full(k, 100.0)
    weights = np.linspace(w, 2 * w, k)
    total = frac * hi.sum()
    n, _ = oracle.project(y, weights, lo, hi, 1.0, total)
    assert n.sum() == pytest.approx(total, rel=1e-9)
    assert np.all(n >= lo) and np.all(n <= hi)
    # any feasible mass-preserving move cannot get closer in the weighted norm
    base = np.sum(weights * (n - y) ** 2)
    i, j = 0, k - 1
    for t in (1e-3, -1e-3):
        m = n.copy()
        m[i] += t / weights[i] * weights[j]
        m[j] -= t / weights[i] * weights[j]
        if np.all(m >= lo) and np.all(m <= hi):
            assert np.sum(weights * (m - y) ** 2) >= base - 1e-9
