import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from solargrid.filters import (capacitance_per_phase, design_single_tuned_filter,
                               filter_from_capacitance, tuned_frequency)

V_LN_400 = 400e3 / math.sqrt(3)


def test_unit_lc():
    assert tuned_frequency(1.0, 1.0) == pytest.approx(1 / (2 * math.pi))


def test_bank_capacitance_from_reactive_power():
    q_phase = 2 * math.pi * 50 * 42.74e-6 * V_LN_400**2
    d = design_single_tuned_filter(q_phase, V_LN_400, 50.0, 5)
    assert d.capacitance == pytest.approx(42.74e-6, rel=1e-12)


def test_fifth_harmonic_inductance():
    d = filter_from_capacitance(42.74e-6, V_LN_400, 50.0, 5)
    expected = 1 / ((2 * math.pi * 250) ** 2 * 42.74e-6)
    assert d.inductance == pytest.approx(expected, rel=1e-12)
    assert d.inductance == pytest.approx(9.48e-3, rel=1e-3)
    assert tuned_frequency(d.inductance, d.capacitance) == pytest.approx(250.0, rel=1e-9)


def test_resistance_from_quality():
    d = filter_from_capacitance(42.74e-6, V_LN_400, 50.0, 7, quality=80)
    x_l = 2 * math.pi * 350 * d.inductance
    assert d.resistance == pytest.approx(x_l / 80)
    assert d.impedance(7) == pytest.approx(complex(d.resistance, 0.0), abs=1e-9)


def test_fundamental_output_exceeds_capacitor_rating():
    # the series reactor raises the capacitor voltage by h^2 / (h^2 - 1)
    d = filter_from_capacitance(42.74e-6, V_LN_400, 50.0, 5, quality=1e9)
    q_cap = 3 * d.reactive_power_per_phase / 1e6
    assert d.fundamental_mvar(400.0) == pytest.approx(q_cap * 25 / 24, rel=1e-6)


@pytest.mark.parametrize("args", [(0, V_LN_400, 50.0), (1e6, -1.0, 50.0), (1e6, V_LN_400, 0.0)])
def test_non_positive_inputs(args):
    with pytest.raises(ValueError):
        capacitance_per_phase(*args)


def test_order_below_two_rejected():
    with pytest.raises(ValueError):
        design_single_tuned_filter(1e6, V_LN_400, 50.0, 1)


@given(st.floats(1e3, 1e9), st.floats(100.0, 5e5), st.sampled_from([50.0, 60.0]), st.integers(2, 49))
def test_design_round_trip(q, v, f, h):
    d = design_single_tuned_filter(q, v, f, h)
    assert tuned_frequency(d.inductance, d.capacitance) == pytest.approx(h * f, rel=1e-9)
    assert d.capacitance == pytest.approx(q / (2 * math.pi * f * v**2), rel=1e-12)
