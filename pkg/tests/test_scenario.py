import copy
import json
import warnings

import numpy as np
import pytest

from curbflow.scenario import (ConstantSupply, PlanningParams, Rent, ScenarioError, aggregate_rent,
                               check_supply_sufficiency, load_scenario, scenario_from_dict, supply_at)


@pytest.fixture
def base_dict(scenarios_dir):
    return json.loads((scenarios_dir / "base_theta050.json").read_text())


def test_base_loads(base):
    assert base.N_a == pytest.approx(8000)
    assert base.N_c == pytest.approx(12000)
    assert base.x_hat == 5


def test_zero_penetration(base_dict):
    base_dict["epsilon"] = 0.0
    sc = scenario_from_dict(base_dict)
    assert sc.N_a == 0 and sc.N_c == sc.N


def test_theta_out_of_range_names_field(base_dict):
    base_dict["supply"]["theta"] = 1.2
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(base_dict)
    assert "theta" in exc.value.field


@pytest.mark.parametrize("key,value", [("N", -1), ("epsilon", 1.5), ("phi", 0.0), ("lambda_a", 0.0),
                                       ("gamma_a", 0.2), ("beta_a", 0.01), ("beta_c", -1.0)])
def test_invalid_values_name_the_field(base_dict, key, value):
    base_dict[key] = value
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(base_dict)
    assert key in exc.value.field


def test_missing_key(base_dict):
    del base_dict["lambda_c"]
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(base_dict)
    assert exc.value.field == "lambda_c"


def test_hv_cruising_condition(base_dict):
    # the base case sits well inside the condition; a larger coefficient breaks it
    base_dict["beta_c"] = 4.0 / 20000
    base_dict["beta_a"] = 0.5e-4
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(base_dict)
    assert exc.value.field == "beta_c"


def test_lambda_order_warns(base_dict):
    base_dict["lambda_a"] = 5.0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        scenario_from_dict(base_dict)
    assert any("lambda_c" in str(x.message) for x in w)


def test_malformed_and_missing_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(bad)
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.json")


def test_supply_at_constant():
    s = supply_at(ConstantSupply(40000, 0.5, 5.0), 1.3, 0.8)
    assert (s.m_a, s.m_c) == pytest.approx((25000, 20000))
    s = supply_at(ConstantSupply(40000, 0.25, 5.0), 4.0, 0.8)
    assert (s.m_a, s.m_c) == pytest.approx((12500, 30000))
    assert supply_at(ConstantSupply(40000, 0.0, 5.0), 0.0, 0.8).m_a == 0
    with pytest.raises(ScenarioError):
        supply_at(ConstantSupply(40000, 0.5, 5.0), 5.5, 0.8)


def test_constant_supply_is_location_independent():
    prof = ConstantSupply(40000, 0.3, 5.0)
    pts = [supply_at(prof, x, 0.8) for x in np.linspace(0, 5, 11)]
    assert all(p == pts[0] for p in pts)


def test_sigmoid_and_tabulated(scenarios_dir, base_dict):
    sig = load_scenario(scenarios_dir / "sigmoid.json")
    th = sig.supply.theta_at(np.linspace(0, 5, 50))
    assert np.all(np.diff(th) > 0) and th[-1] < 0.4
    d = copy.deepcopy(base_dict)
    d["supply"] = {"type": "tabulated", "x_hat": 5,
                   "breakpoints": [[0, 40000, 0.1], [2, 30000, 0.3], [4, 20000, 0.3]]}
    sc = scenario_from_dict(d)
    assert sc.supply.k_at(1.0) == pytest.approx(35000)
    assert sc.supply.theta_at(1.0) == pytest.approx(0.2)
    # clamped beyond the last breakpoint
    assert sc.supply.k_at(4.5) == pytest.approx(20000)


def test_aggregate_rent():
    assert aggregate_rent(PlanningParams(50, Rent("linear", 200), 40000), 5) == pytest.approx(500)
    assert aggregate_rent(PlanningParams(50, Rent("constant", 100), 40000), 5) == pytest.approx(500)
    assert aggregate_rent(PlanningParams(50, Rent("linear", 0), 40000), 5) == 0


def test_aggregate_rent_is_linear_in_rent():
    a = aggregate_rent(PlanningParams(0, Rent("linear", 120), 1), 5)
    b = aggregate_rent(PlanningParams(0, Rent("linear", 80), 1), 5)
    assert a + b == pytest.approx(aggregate_rent(PlanningParams(0, Rent("linear", 200), 1), 5))


def test_supply_sufficiency(base25, base_dict):
    rep = check_supply_sufficiency(base25)
    assert rep.av_spaces == pytest.approx(62500) and rep.feasible
    d = copy.deepcopy(base_dict)
    d["N"] = 20000
    d["epsilon"] = 1.0
    d["supply"]["theta"] = 0.08  # 0.08 * 40000 / 0.8 * 5 = 20000 = N_a
    rep = check_supply_sufficiency(scenario_from_dict(d))
    assert rep.av_margin == pytest.approx(0) and not rep.av_ok
    d["epsilon"] = 0.4
    d["supply"]["theta"] = 0.0
    d["beta_c"] = 0.5e-4  # keep the HV condition with all area given to HVs
    assert not check_supply_sufficiency(scenario_from_dict(d)).av_ok
