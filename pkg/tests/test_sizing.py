import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from solargrid.sizing import PlantParams, line_current, size_plant, transformer_rating


def test_line_current_matches_direct_formula():
    assert line_current(5e6, 33000.0) == pytest.approx(5e6 / (math.sqrt(3) * 33000.0))


def test_line_current_rejects_bad_voltage():
    with pytest.raises(ValueError):
        line_current(1.0, 0.0)


def test_transformer_rating_applies_divisor_then_margin():
    s, rec = transformer_rating(500.0, 0.98, 1.3)
    assert s == pytest.approx(500 / 0.98)
    assert rec == pytest.approx(500 / 0.98 * 1.3)


def test_default_chain_counts():
    r = size_plant()
    assert r.total_panels == 8400
    assert r.array_power_mw == pytest.approx(4.2)
    assert r.arrays_required == 238
    assert r.inverter_ac_power_mw == pytest.approx(3.5)


def test_arrays_round_half_up():
    # 8000 panels x 500 W = 4.0 MW, so 1002 MW is exactly 250.5 arrays
    p = PlantParams(strings_parallel=320, plant_target_mw=1002.0)
    assert size_plant(p).arrays_required == 251


@pytest.mark.parametrize("field,value", [("panel_power_w", 0), ("lv_voltage_v", -1.0),
                                         ("hv_divisor", 1.5), ("inverter_loading_ratio", 0.9)])
def test_invalid_params(field, value):
    with pytest.raises(ValueError):
        PlantParams(**{field: value})


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        PlantParams.from_dict({"panels": 3})


@given(st.floats(1e3, 1e9), st.floats(100.0, 5e5))
def test_current_scales_inverse_with_voltage(s, v):
    assert line_current(s, v) * v == pytest.approx(line_current(s, 2 * v) * 2 * v)
