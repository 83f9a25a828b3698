"""PV plant design chain: panel counts through HV transformer rating."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

SQRT3 = math.sqrt(3.0)


def line_current(apparent_power: float, line_voltage: float) -> float:
    """Three-phase line current I = S / (sqrt(3) V), SI units (VA, V -> A)."""
    if line_voltage <= 0:
        raise ValueError("line voltage must be positive")
    if apparent_power < 0:
        raise ValueError("apparent power must be non-negative")
    return apparent_power / (SQRT3 * line_voltage)


def transformer_rating(active_power: float, divisor: float, margin: float = 1.0) -> tuple[float, float]:
    """Return (S, recommended) = (P / divisor, S * margin).

    ``divisor`` is the single factor the design chain divides by; whether it
    stands for efficiency or power factor is left to the caller.
    """
    if not 0 < divisor <= 1:
        raise ValueError("divisor must lie in (0, 1]")
    if margin < 1:
        raise ValueError("margin must be >= 1")
    s = active_power / divisor
    return s, s * margin


@dataclass(frozen=True)
class PlantParams:
    panels_per_string: int = 25
    strings_parallel: int = 336
    panel_power_w: float = 500.0
    plant_target_mw: float = 1000.0
    inverter_loading_ratio: float = 1.2
    inverter_ac_voltage_v: float = 630.0
    inverter_power_factor: float = 1.0
    lv_transformer_mva: float = 5.0
    lv_voltage_v: float = 630.0
    mv_voltage_v: float = 33000.0
    hv_voltage_kv: float = 400.0
    hv_plant_power_mw: float = 500.0
    hv_divisor: float = 0.98
    rating_margin: float = 1.3

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be positive, got {value!r}")
        if self.inverter_power_factor > 1:
            raise ValueError("inverter_power_factor must be <= 1")
        if self.hv_divisor > 1:
            raise ValueError("hv_divisor must be <= 1")
        if self.inverter_loading_ratio < 1:
            raise ValueError("inverter_loading_ratio must be >= 1")
        if self.rating_margin < 1:
            raise ValueError("rating_margin must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> PlantParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError("unknown plant parameters: " + ", ".join(sorted(unknown)))
        return cls(**data)


@dataclass(frozen=True)
class PlantSizingReport:
    total_panels: int
    array_power_mw: float
    arrays_ratio: float  # exact plant_target / array_power
    arrays_required: int  # ratio rounded half-up
    inverter_ac_power_mw: float
    inverter_current_a: float
    lv_current_a: float
    mv_current_a: float
    hv_apparent_power_mva: float
    hv_current_a: float
    recommended_rating_mva: float

    def rows(self) -> list[tuple[str, float, str]]:
        units = {
            "total_panels": "", "array_power_mw": "MW", "arrays_ratio": "", "arrays_required": "",
            "inverter_ac_power_mw": "MW", "inverter_current_a": "A", "lv_current_a": "A",
            "mv_current_a": "A", "hv_apparent_power_mva": "MVA", "hv_current_a": "A",
            "recommended_rating_mva": "MVA",
        }
        return [(k, v, units[k]) for k, v in asdict(self).items()]


def size_plant(params: PlantParams | None = None) -> PlantSizingReport:
    p = params or PlantParams()
    total = p.panels_per_string * p.strings_parallel
    array_w = total * p.panel_power_w
    ratio = p.plant_target_mw * 1e6 / array_w
    s_hv, rating = transformer_rating(p.hv_plant_power_mw, p.hv_divisor, p.rating_margin)
    return PlantSizingReport(
        total_panels=total,
        array_power_mw=array_w / 1e6,
        arrays_ratio=ratio,
        arrays_required=int(math.floor(ratio + 0.5)),
        inverter_ac_power_mw=array_w / p.inverter_loading_ratio / 1e6,
        inverter_current_a=line_current(array_w / p.inverter_power_factor, p.inverter_ac_voltage_v),
        lv_current_a=line_current(p.lv_transformer_mva * 1e6, p.lv_voltage_v),
        mv_current_a=line_current(p.lv_transformer_mva * 1e6, p.mv_voltage_v),
        hv_apparent_power_mva=s_hv,
        hv_current_a=line_current(s_hv * 1e6, p.hv_voltage_kv * 1e3),
        recommended_rating_mva=rating,
    )
