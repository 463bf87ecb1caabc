import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curbflow.search import (Binomial, Piecewise, SearchDomainError, search_model_from_dict,
                             search_partials, search_time)

PW = Piecewise(10.0, 1000.0, 0.2)


def test_binomial_empty_lot_is_one():
    assert search_time(Binomial(), 0.0, 100.0) == 1.0


def test_piecewise_branches():
    assert search_time(PW, 50.0, 100.0) == pytest.approx(5.0)
    assert search_time(PW, 90.0, 100.0) == pytest.approx(108.0)


def test_binomial_partials_known_values():
    p = search_partials(Binomial(), 1.0, 2.0)
    assert p.dn == pytest.approx(2.0)
    assert p.dnn == pytest.approx(4.0)
    assert p.dm == pytest.approx(-1.0)
    assert p.dnm == pytest.approx(-3.0)
    assert search_partials(Binomial(), 0.0, 7.0).dm == 0.0


def test_piecewise_partials_below_kink():
    p = search_partials(PW, 100.0, 25000.0)
    assert p.dn == pytest.approx(4e-4)
    assert p.dnn == 0.0
    assert p.dm == pytest.approx(-4e-4 * 100 / 25000)


def test_piecewise_kink_uses_left_branch():
    m = 1000.0
    assert search_partials(PW, 0.8 * m, m).dn == pytest.approx(10.0 / m)
    assert search_partials(PW, 0.81 * m, m).dn == pytest.approx(1000.0 / m)


def test_binomial_pole():
    m = 100.0
    assert search_time(Binomial(), m * (1 - 1e-6), m) > 1e5
    with pytest.raises(SearchDomainError):
        search_time(Binomial(), m, m)


@pytest.mark.parametrize("n,m", [(-1.0, 10.0), (1.0, 0.0), (1.0, -2.0)])
def test_domain_errors(n, m):
    with pytest.raises(SearchDomainError):
        search_time(PW, n, m)
    with pytest.raises(SearchDomainError):
        search_time(Binomial(), n, m)


def test_s_min_per_form():
    assert Binomial().s_min == 1.0
    assert PW.s_min == 0.0


def test_invalid_piecewise_params():
    with pytest.raises(ValueError):
        Piecewise(10.0, 1000.0, 1.5)
    with pytest.raises(ValueError):
        Piecewise(-1.0, 1000.0, 0.2)


def test_model_from_dict():
    assert search_model_from_dict({"type": "binomial"}).kind == "binomial"
    assert search_model_from_dict({"type": "piecewise", "delta": 10, "Delta": 1000, "omega": 0.2}) == PW
    with pytest.raises(ValueError):
        search_model_from_dict({"type": "queue"})


def test_marginal_inverse_roundtrip():
    for model in (Binomial(), PW):
        rho = np.linspace(0.0, 0.95, 40)
        rho = rho[np.abs(rho - 0.8) > 1e-9]
        back = model.occupancy_at_marginal(model.marginal_of_occupancy(rho))
        assert np.allclose(back, rho, atol=1e-12)
        back = model.occupancy_at_time(model.time_of_occupancy(rho))
        assert np.allclose(back, rho, atol=1e-12)


def _fd(f, v, h):
    return (f(v + h) - f(v - h)) / (2 * h)


occupancies = st.floats(0.01, 0.98)
spaces = st.floats(10.0, 1e5)


@settings(max_examples=200, deadline=None)
@given(rho=occupancies, m=spaces)
def test_binomial_partials_match_finite_differences(rho, m):
    model = Binomial()
    n = rho * m
    h = 1e-5 * m * min(rho, 1 - rho)
    p = model.partials(n, m)
    assert p.dn > 0 and p.dnn >= 0
    assert _fd(lambda v: model.time(v, m), n, h) == pytest.approx(p.dn, rel=1e-6)
    assert _fd(lambda v: model.time(n, v), m, h) == pytest.approx(p.dm, rel=1e-6, abs=1e-12)
    assert _fd(lambda v: model.partials(v, m).dn, n, h) == pytest.approx(p.dnn, rel=1e-6)
    assert _fd(lambda v: model.partials(n, v).dn, m, h) == pytest.approx(p.dnm, rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(rho=occupancies.filter(lambda r: abs(r - 0.8) > 1e-3), m=spaces)
def test_piecewise_partials_match_finite_differences(rho, m):
    n = rho * m
    h = 1e-7 * m
    p = PW.partials(n, m)
    assert p.dn > 0 and p.dnn == 0
    assert _fd(lambda v: PW.time(v, m), n, h) == pytest.approx(p.dn, rel=1e-6)
    assert _fd(lambda v: PW.time(n, v), m, h) == pytest.approx(p.dm, rel=1e-6)
    assert _fd(lambda v: PW.partials(v, m).dn, n, h) == pytest.approx(p.dnn, abs=1e-9)
    assert _fd(lambda v: PW.partials(n, v).dn, m, h) == pytest.approx(p.dnm, rel=1e-6)
