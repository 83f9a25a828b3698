"""Single-tuned harmonic filter design."""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_QUALITY = 50.0


def tuned_frequency(inductance: float, capacitance: float) -> float:
    """Series resonance f = 1 / (2 pi sqrt(L C)) in Hz."""
    if inductance <= 0 or capacitance <= 0:
        raise ValueError("inductance and capacitance must be positive")
    return 1.0 / (2.0 * math.pi * math.sqrt(inductance * capacitance))


def capacitance_per_phase(q_phase: float, v_ln: float, fundamental: float) -> float:
    """Capacitance delivering ``q_phase`` VAR at line-to-neutral voltage ``v_ln``."""
    if q_phase <= 0 or v_ln <= 0 or fundamental <= 0:
        raise ValueError("reactive power, voltage and frequency must be positive")
    return q_phase / (2.0 * math.pi * fundamental * v_ln**2)


@dataclass(frozen=True)
class FilterDesign:
    """Per-phase parameters of a series R-L-C branch tuned to one harmonic order.

    ``resistance`` follows from the quality factor as X_L(tuned) / quality.
    """

    target_order: int
    reactive_power_per_phase: float  # VAR, capacitor rating at the fundamental
    line_to_neutral_voltage: float  # V
    capacitance: float  # F
    inductance: float  # H
    resistance: float  # ohm
    tuned_frequency: float  # Hz
    fundamental: float  # Hz
    quality: float = DEFAULT_QUALITY

    def impedance(self, order: float) -> complex:
        """Per-phase impedance in ohms at ``order`` times the fundamental."""
        w = 2.0 * math.pi * self.fundamental * order
        return complex(self.resistance, w * self.inductance - 1.0 / (w * self.capacitance))

    def fundamental_mvar(self, v_ll_kv: float) -> float:
        """Three-phase reactive output at the fundamental for a line voltage in kV."""
        v_ln = v_ll_kv * 1e3 / math.sqrt(3.0)
        return 3.0 * v_ln**2 * (1.0 / self.impedance(1)).imag / 1e6


def design_single_tuned_filter(q_phase: float, v_ln: float, fundamental: float,
                               target_order: int,
                               quality: float = DEFAULT_QUALITY) -> FilterDesign:
    """Size C from the per-phase capacitor rating, then pick L to resonate at
    ``target_order`` x ``fundamental``."""
    if target_order < 2:
        raise ValueError("target_order must be >= 2")
    if quality <= 0:
        raise ValueError("quality factor must be positive")
    c = capacitance_per_phase(q_phase, v_ln, fundamental)
    w_tuned = 2.0 * math.pi * fundamental * target_order
    inductance = 1.0 / (w_tuned**2 * c)
    return FilterDesign(
        target_order=int(target_order),
        reactive_power_per_phase=float(q_phase),
        line_to_neutral_voltage=float(v_ln),
        capacitance=c,
        inductance=inductance,
        resistance=w_tuned * inductance / quality,
        tuned_frequency=tuned_frequency(inductance, c),
        fundamental=float(fundamental),
        quality=float(quality),
    )


def filter_from_capacitance(capacitance: float, v_ln: float, fundamental: float,
                            target_order: int,
                            quality: float = DEFAULT_QUALITY) -> FilterDesign:
    """Same design as :func:`design_single_tuned_filter` for a given bank capacitance."""
    if capacitance <= 0:
        raise ValueError("capacitance must be positive")
    q_phase = 2.0 * math.pi * fundamental * capacitance * v_ln**2
    return design_single_tuned_filter(q_phase, v_ln, fundamental, target_order, quality)
