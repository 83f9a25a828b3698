import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_bus_spec
from oracles import two_bus_collapse_scale
from solargrid.network import build_network
from solargrid.powerflow import PowerFlowError, SolverOptions, solve_load_flow
from solargrid.stability import (BaseCaseInfeasibleError, literal_percent_b, loading_margin,
                                 voltage_stability_index)


def test_literal_examples():
    assert literal_percent_b(1.0, 1.0) == 0.0
    assert literal_percent_b(1.0, 0.96) == pytest.approx(4.0)
    assert literal_percent_b(1.0, 0.0154) == pytest.approx(98.46)
    assert literal_percent_b(1.0, 1.02) == pytest.approx(-2.0)


def test_literal_rejects_zero_reference():
    with pytest.raises(ValueError):
        literal_percent_b(0.0, 1.0)


@given(st.floats(0.1, 2.0), st.floats(0.0, 2.0), st.floats(1e-3, 1e3))
def test_literal_scale_invariant(vs, vo, c):
    assert literal_percent_b(c * vs, c * vo) == pytest.approx(literal_percent_b(vs, vo), abs=1e-9)


def test_index_complements_literal():
    assert voltage_stability_index(1.0, 0.98) == pytest.approx(98.0)


def test_two_bus_collapse_matches_analytic():
    beta = 0.2
    m = loading_margin(build_network(two_bus_spec(p_mw=100.0, q_mvar=20.0, x_pu=0.1)))
    expected = two_bus_collapse_scale(1.0, beta, 0.1)
    assert m.collapse_scale == pytest.approx(expected, rel=1e-3)
    assert m.loading_margin_percent == pytest.approx((expected - 1) / expected * 100, rel=1e-3)
    assert m.bus == "L"


def test_bisection_brackets_the_collapse():
    net = build_network(two_bus_spec(p_mw=100.0, q_mvar=20.0, x_pu=0.1))
    m = loading_margin(net, refine_tolerance=1e-4)
    lo_lam, lo_v = max(m.nose_curve)
    assert m.collapse_scale - 1e-4 <= lo_lam < m.collapse_scale
    warm = solve_load_flow(net.scaled_loads(lo_lam))
    solve_load_flow(net.scaled_loads(m.collapse_scale - 1e-4), SolverOptions(initial=(warm.vm, warm.va)))
    with pytest.raises(PowerFlowError):
        solve_load_flow(net.scaled_loads(m.collapse_scale + 1e-4), SolverOptions(initial=(warm.vm, warm.va)))


def test_near_critical_case_has_small_margin():
    beta, x = 0.0, 0.1
    p = two_bus_collapse_scale(1.0, beta, x) / 1.005 * 100.0  # collapse at lambda = 1.005
    m = loading_margin(build_network(two_bus_spec(p_mw=p, x_pu=x)), step=0.001)
    assert m.collapse_scale == pytest.approx(1.005, abs=2e-4)
    assert m.loading_margin_percent < 0.6


def test_halving_load_does_not_reduce_collapse_power():
    net = build_network(two_bus_spec(p_mw=100.0, q_mvar=30.0))
    full = loading_margin(net, step=0.05)
    half = loading_margin(net.scaled_loads(0.5), step=0.05)
    assert half.collapse_scale * 0.5 == pytest.approx(full.collapse_scale, rel=1e-3)
    assert half.collapse_scale >= full.collapse_scale


def test_infeasible_base_case():
    with pytest.raises(BaseCaseInfeasibleError):
        loading_margin(build_network(two_bus_spec(p_mw=1000.0, x_pu=0.1)))


def test_scale_limit_flagged():
    m = loading_margin(build_network(two_bus_spec(p_mw=1.0, x_pu=0.01)), step=1.0, max_scale=5.0)
    assert m.reached_scale_limit and m.collapse_scale == 5.0


def test_reports_both_quantities():
    m = loading_margin(build_network(two_bus_spec(p_mw=100.0, q_mvar=20.0)), step=0.05)
    assert m.literal_percent_b == pytest.approx((1.0 - m.v_operating) * 100)
    assert m.literal_percent_b < 10 < m.loading_margin_percent
    assert math.isfinite(m.voltage_stability_index)
