from dataclasses import replace

import numpy as np
import pytest

from curbflow import planner
from curbflow.scenario import PlanningParams, Rent

from conftest import scenario

EPS_GRID = np.round(np.arange(0.05, 0.951, 0.05), 10)


@pytest.fixture(scope="module")
def sc():
    return scenario("base_theta050", "piecewise")


def with_planning(sc, **kw):
    return replace(sc, planning=replace(sc.planning, **kw))


def test_benchmark(sc):
    d, budget = planner.benchmark_design(sc)
    assert d.theta == pytest.approx(0.32 / 0.92)
    assert d.k == 40000 and d.tag == "benchmark"
    assert budget == pytest.approx(2.348e7, rel=1e-3)
    assert planner.benchmark_theta(replace(sc, epsilon=0.0)) == 0.0


def test_budget_override(sc):
    assert planner.budget(with_planning(sc, budget=1e7)) == 1e7


def test_closed_form_totals(sc):
    ev = planner.tc_closed_form(planner.benchmark_design(sc)[0], sc)
    assert ev.TC == pytest.approx(61100, rel=1e-4)
    assert ev.reduction == 0.0
    fb = planner.tc_closed_form(planner.first_best(sc), sc)
    assert fb.TC == pytest.approx(55483, rel=5e-4)
    assert fb.reduction == pytest.approx(0.092, abs=0.002)
    assert fb.budget_ok and fb.supply_ok
    sb = planner.tc_closed_form(planner.second_best(sc), sc)
    assert sb.TC == pytest.approx(57588, rel=5e-4)
    assert sb.reduction == pytest.approx(0.057, abs=0.002)


def test_boundary_shares_rejected(sc):
    for t in (0.0, 1.0):
        with pytest.raises(planner.InfeasibleDesignError):
            planner.tc_closed_form(planner.Design(t, 40000), sc)
    with pytest.raises(planner.PlanningError):
        planner.Design(1.2, 40000)
    with pytest.raises(planner.PlanningError):
        planner.Design(0.5, 0.0)


def test_first_best(sc):
    d = planner.first_best(sc)
    assert d.theta == pytest.approx(0.1469, abs=1e-3)
    assert d.k == pytest.approx(43744, abs=10)
    # the budget is spent in full
    assert planner.infrastructure_cost(sc, d) == pytest.approx(planner.budget(sc), rel=1e-12)
    assert planner.first_best(replace(sc, epsilon=1.0)).theta == pytest.approx(1.0)
    with pytest.raises(planner.PlanningError):
        planner.first_best(with_planning(sc, rent=Rent("linear", 0.0), budget=1e7))


def test_first_best_tends_to_second_best_as_upgrade_cost_vanishes(sc):
    cheap = with_planning(sc, v_a=1e-9)
    fb, sb = planner.first_best(cheap), planner.second_best(cheap)
    assert fb.theta == pytest.approx(sb.theta, rel=1e-8)
    assert fb.k == pytest.approx(sc.planning.k_b, rel=1e-8)


def test_second_best(sc):
    d = planner.second_best(sc)
    assert d.theta == pytest.approx(0.1740, abs=1e-3)
    assert d.k == sc.planning.k_b
    assert planner.second_best(replace(sc, epsilon=0.0)).theta == 0.0
    # mu * phi = 1 makes the share equal to the penetration
    sym = replace(sc, phi=1.0, lambda_a=sc.lambda_c * 0.999999999999)
    assert planner.second_best(replace(sym, epsilon=0.3)).theta == pytest.approx(0.3, rel=1e-9)


def test_reductions_and_saving(sc):
    r = planner.reductions(sc)
    assert r["first_best"] == pytest.approx(0.092, abs=0.002)
    assert r["second_best"] == pytest.approx(0.057, abs=0.002)
    assert r["second_to_first"] == pytest.approx(0.036, abs=0.002)
    amount, frac = planner.budget_saving(sc)
    assert amount == pytest.approx(1.74e6, rel=5e-3)
    assert frac == pytest.approx(0.074, abs=0.002)
    assert planner.budget_saving(with_planning(sc, v_a=0.0))[0] == 0.0
    assert planner.budget_saving(replace(sc, epsilon=0.0))[0] == 0.0


def test_direct_reduction_formula(sc):
    for e in EPS_GRID:
        s = replace(sc, epsilon=float(e))
        assert planner.reduction_first_best_direct(s) == pytest.approx(planner.reductions(s)["first_best"], rel=1e-9)


def test_bound_constants(sc):
    b = planner.bound_constants(sc)
    assert b["l52"] == pytest.approx(0.262, abs=1e-3)
    assert b["l53"] == pytest.approx(0.188, abs=1e-3)
    assert b["l54"] == pytest.approx(0.148, abs=1e-3)


def test_bounds_hold_on_penetration_grid(sc):
    b = planner.bound_constants(sc)
    for e in EPS_GRID:
        s = replace(sc, epsilon=float(e))
        r = planner.reductions(s)
        lb = planner.bound_constants(s)
        assert r["first_best"] < b["l52"]
        assert r["second_best"] < b["l53"]
        assert r["second_to_first"] <= lb["l54"]


def test_reduction_maxima(sc):
    out = planner.reduction_bounds(sc)
    assert out["max_l52"] == pytest.approx(0.107, abs=0.003)
    assert out["argmax_l52"] == pytest.approx(0.61, abs=0.02)
    assert out["max_l53"] == pytest.approx(0.073, abs=0.003)
    assert out["argmax_l53"] == pytest.approx(0.66, abs=0.02)
    assert out["max_l54"] == pytest.approx(0.038, abs=0.003)
    assert out["argmax_l54"] == pytest.approx(0.51, abs=0.02)
    assert 0 < out["eps_star_l52"] < 1 and 0 < out["eps_star_l53"] < 1


def test_minimized_values_use_plus_sign(sc):
    for e in EPS_GRID:
        s = replace(sc, epsilon=float(e))
        assert planner.tc_closed_form(planner.first_best(s), s).TC == pytest.approx(
            planner.first_best_min_value(s), rel=1e-9)
        assert planner.tc_closed_form(planner.second_best(s), s).TC == pytest.approx(
            planner.second_best_min_value(s), rel=1e-9)


def test_share_orderings(sc):
    assert sc.lambda_a / sc.lambda_c < sc.phi
    for e in EPS_GRID:
        s = replace(sc, epsilon=float(e))
        t1, t2, tb = planner.first_best(s).theta, planner.second_best(s).theta, planner.benchmark_theta(s)
        assert t1 < t2 < tb
        assert t1 < e


def test_first_best_share_monotonicity(sc):
    t = planner.first_best(sc).theta
    assert planner.first_best(with_planning(sc, k_b=20000)).theta == pytest.approx(t, rel=1e-12)
    assert planner.first_best(with_planning(sc, v_a=60)).theta < t
    assert planner.first_best(replace(sc, epsilon=0.5)).theta > t
    assert planner.first_best(replace(sc, phi=0.9)).theta > t
    assert planner.first_best(with_planning(sc, rent=Rent("linear", 250))).theta > t
    assert planner.first_best(replace(sc, lambda_a=0.6)).theta > t


def test_first_best_beats_every_budget_feasible_cell(sc):
    res = planner.sweep(sc, np.linspace(0.02, 0.98, 60), np.linspace(5000, 60000, 60))
    best = planner.tc_closed_form(planner.first_best(sc), sc).TC
    assert np.all(res.TC[res.budget_ok] >= best * (1 - 1e-12))


def test_sweep_flags(sc):
    d, budget = planner.benchmark_design(sc)
    res = planner.sweep(sc, [0.1, d.theta, 0.6], [20000, d.k, 60000])
    assert res.reduction[1, 1] == 0.0
    expected = res.NP <= budget
    assert np.array_equal(res.budget_ok, expected)
    assert res.budget_ok[1, 1]
    poor = with_planning(sc, budget=1.0)
    assert planner.sweep(poor, [0.2, 0.3], [30000, 40000]).argmin is None


def test_sweep_rejects_bad_grids(sc):
    with pytest.raises(planner.PlanningError):
        planner.sweep(sc, [], [40000])
    with pytest.raises(planner.PlanningError):
        planner.sweep(sc, [0.2], [-1.0])
    with pytest.raises(planner.InfeasibleDesignError):
        planner.sweep(sc, [0.0, 0.5], [40000])


def test_sweep_threads_do_not_change_results(sc, monkeypatch):
    th, ks = np.linspace(0.02, 0.98, 37), np.linspace(5000, 60000, 23)
    one = planner.sweep(sc, th, ks, threads=1)
    monkeypatch.setenv("CURBFLOW_THREADS", "4")
    assert planner.sweep_threads() == 4
    many = planner.sweep(sc, th, ks)
    assert np.array_equal(one.TC, many.TC) and np.array_equal(one.feasible, many.feasible)


def test_piecewise_model_from_binomial_scenario():
    sc = scenario("base_theta050")
    assert planner.piecewise_model(sc).omega == 0.2


def test_infrastructure_cost_profiles():
    const = scenario("base_theta025")
    assert planner.infrastructure_cost(const) == pytest.approx(40000 * (50 * 0.25 * 5 + 500))
    d = planner.Design(0.25, 40000)
    assert planner.infrastructure_cost(const, d) == pytest.approx(planner.infrastructure_cost(const))
