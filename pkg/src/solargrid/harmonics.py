"""Harmonic penetration, THD and IEEE 519 voltage-distortion checks.

Each harmonic order is solved independently on Y(h) V(h) = I(h). The slack
bus is an ideal fundamental-frequency source, so its harmonic voltage is held
at zero. Loads are not represented at harmonic orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import (DEFAULT_QUALITY, FilterDesign, design_single_tuned_filter,  # noqa: F401
                      filter_from_capacitance, tuned_frequency)
from .network import DanglingReferenceError, Network, ShuntDevice, ShuntKind, admittance_matrix
from .powerflow import PowerFlowSolution, solve_load_flow

# (upper bound of the bus voltage class in kV, THD limit in %), IEEE 519-2014 Table 1
IEEE519_VOLTAGE_LIMITS: tuple[tuple[float, float], ...] = (
    (1.0, 8.0),
    (69.0, 5.0),
    (161.0, 2.5),
    (math.inf, 1.5),
)


RESONANCE_RTOL = 1e-12


class HarmonicResonanceError(RuntimeError):
    def __init__(self, order: int):
        super().__init__(f"singular harmonic admittance matrix at order {order} (resonance)")
        self.order = order


@dataclass(frozen=True)
class HarmonicSource:
    """Current injection spectrum at a bus.

    ``spectrum`` maps order -> (magnitude in %, phase in rad). Magnitudes are
    relative to the bus's own fundamental injection current, or to the rated
    current of ``reference_mva`` at the bus voltage when that is given (useful
    for a plant emission referred to a bus with no net injection).
    """

    bus: str
    spectrum: dict
    reference_mva: float | None = None

    def __post_init__(self):
        for order, (mag, _phase) in self.spectrum.items():
            if int(order) != order or order < 2:
                raise ValueError(f"harmonic order must be an integer >= 2, got {order!r}")
            if mag < 0:
                raise ValueError("harmonic magnitudes must be non-negative")
        if self.reference_mva is not None and not self.reference_mva > 0:
            raise ValueError("reference_mva must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> HarmonicSource:
        spectrum = {}
        for key, value in data["spectrum"].items():
            if isinstance(value, (list, tuple)):
                mag, phase = float(value[0]), float(value[1])
            else:
                mag, phase = float(value), 0.0
            spectrum[int(key)] = (mag, phase)
        ref = data.get("reference_mva")
        return cls(str(data["bus"]), spectrum, None if ref is None else float(ref))

    def to_dict(self) -> dict:
        out = {"bus": self.bus,
               "spectrum": {str(h): [m, p] for h, (m, p) in sorted(self.spectrum.items())}}
        if self.reference_mva is not None:
            out["reference_mva"] = self.reference_mva
        return out

    def scaled(self, factor: float) -> HarmonicSource:
        return HarmonicSource(self.bus, {h: (m * factor, p) for h, (m, p) in self.spectrum.items()},
                              self.reference_mva)


def thd(fundamental: float, components) -> float:
    """sqrt(V2^2 + ... + Vn^2) / V1 * 100."""
    if not fundamental > 0:
        raise ValueError("fundamental must be positive")
    comps = np.asarray(list(components), dtype=float)
    if comps.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(comps**2)) / fundamental * 100.0)


@dataclass(frozen=True)
class HarmonicReport:
    bus_ids: tuple[str, ...]
    nominal_kv: tuple[float, ...]
    orders: tuple[int, ...]
    vh_pct: np.ndarray  # (bus, order) harmonic voltage in % of fundamental
    thd_pct: dict

    def component(self, bus: str, order: int) -> float:
        return float(self.vh_pct[self.bus_ids.index(bus), self.orders.index(order)])

    def thd(self, bus: str) -> float:
        return self.thd_pct[bus]

    def rows(self):
        """(bus, order, V_h %, THD %) in bus then order order."""
        for i, bus in enumerate(self.bus_ids):
            for j, h in enumerate(self.orders):
                yield bus, h, float(self.vh_pct[i, j]), self.thd_pct[bus]


def _fundamental_currents(net: Network, solution: PowerFlowSolution) -> np.ndarray:
    """Magnitude of the fundamental current each bus injects (pu)."""
    s = (solution.p_injection_mw + 1j * solution.q_injection_mvar) / net.base_mva
    return np.abs(s) / solution.vm


def harmonic_scan(net: Network, sources, orders, fundamental: PowerFlowSolution | None = None
                  ) -> HarmonicReport:
    """Per-order network solution for the given current sources."""
    orders = tuple(int(h) for h in orders)
    if any(h < 2 for h in orders):
        raise ValueError("harmonic orders must be >= 2")
    sources = list(sources)
    idx = net.bus_index
    for src in sources:
        if src.bus not in idx:
            raise DanglingReferenceError(f"harmonic source at unknown bus {src.bus!r}")
    if fundamental is None:
        fundamental = solve_load_flow(net)
    n = len(net.buses)
    slack = idx[net.slack.id]
    keep = np.array([i for i in range(n) if i != slack], dtype=np.int64)
    i1 = _fundamental_currents(net, fundamental)
    vh = np.zeros((n, len(orders)))
    for j, h in enumerate(orders):
        inj = np.zeros(n, dtype=complex)
        for src in sources:
            if h in src.spectrum:
                mag, phase = src.spectrum[h]
                k = idx[src.bus]
                base = i1[k] if src.reference_mva is None else src.reference_mva / net.base_mva / fundamental.vm[k]
                inj[k] += mag / 100.0 * base * np.exp(1j * phase)
        if not np.any(inj) or keep.size == 0:
            continue
        y_full = admittance_matrix(net, h)
        Y = y_full[np.ix_(keep, keep)]
        # singular relative to the element admittances, not to Y itself, so a
        # single bus whose line and shunt cancel is caught too
        scale = np.abs(y_full).max()
        try:
            s_min = np.linalg.svd(Y, compute_uv=False).min()
            if not np.isfinite(s_min) or s_min <= RESONANCE_RTOL * scale:
                raise np.linalg.LinAlgError
            v = np.linalg.solve(Y, inj[keep])
        except np.linalg.LinAlgError:
            raise HarmonicResonanceError(h) from None
        vh[keep, j] = np.abs(v) / fundamental.vm[keep] * 100.0
    thd_pct = {b.id: thd(100.0, vh[i]) for i, b in enumerate(net.buses)}
    return HarmonicReport(tuple(b.id for b in net.buses), tuple(b.nominal_kv for b in net.buses),
                          orders, vh, thd_pct)


def thd_limit(kv: float, limits=IEEE519_VOLTAGE_LIMITS) -> float:
    for upper, limit in limits:
        if kv <= upper:
            return limit
    return limits[-1][1]


@dataclass(frozen=True)
class ThdVerdict:
    bus: str
    thd_pct: float
    limit_pct: float

    @property
    def passed(self) -> bool:
        return self.thd_pct <= self.limit_pct


def ieee519_check(report: HarmonicReport, bus_voltage_class=None,
                  limits=IEEE519_VOLTAGE_LIMITS) -> dict:
    """Pass/fail per bus; ``bus_voltage_class`` is a kV value or a {bus: kV} map,
    defaulting to each bus's nominal voltage."""
    verdicts = {}
    for bus, kv_nom in zip(report.bus_ids, report.nominal_kv):
        if bus_voltage_class is None:
            kv = kv_nom
        elif isinstance(bus_voltage_class, dict):
            kv = bus_voltage_class.get(bus, kv_nom)
        else:
            kv = float(bus_voltage_class)
        verdicts[bus] = ThdVerdict(bus, report.thd_pct[bus], thd_limit(kv, limits))
    return verdicts


def add_filter(net: Network, bus: str, order: int, *, capacitance: float | None = None,
               q_phase: float | None = None, quality: float = DEFAULT_QUALITY,
               device_id: str | None = None) -> Network:
    """Copy of ``net`` with a single-tuned filter at ``bus``."""
    kv = net.bus(bus).nominal_kv
    v_ln = kv * 1e3 / math.sqrt(3.0)
    if capacitance is not None:
        design = filter_from_capacitance(capacitance, v_ln, net.base_frequency, order, quality)
    elif q_phase is not None:
        design = design_single_tuned_filter(q_phase, v_ln, net.base_frequency, order, quality)
    else:
        raise ValueError("give capacitance or q_phase")
    if device_id is None:
        count = sum(1 for s in net.shunts if s.kind is ShuntKind.FILTER)
        device_id = f"F{count + 1}_{bus}_h{order}"
    return net.with_shunts(list(net.shunts) + [ShuntDevice(device_id, bus, ShuntKind.FILTER,
                                                           filter=design)])
