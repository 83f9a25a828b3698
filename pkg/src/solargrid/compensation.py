"""Reactive compensation sizing and SVC placement."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .network import DanglingReferenceError, Network, ShuntDevice, ShuntKind

DEFAULT_SVC_LIMIT_MVAR = 6500.0


class SvcLimitError(ValueError):
    pass


def _check_pf(name: str, pf: float) -> None:
    if not 0 < pf <= 1:
        raise ValueError(f"{name} must lie in (0, 1], got {pf!r}")


def required_compensation(p_mw: float, pf_actual: float, pf_target: float) -> float:
    """Q_c = P (tan(acos pf_actual) - tan(acos pf_target)) in MVAR."""
    _check_pf("pf_actual", pf_actual)
    _check_pf("pf_target", pf_target)
    if p_mw <= 0:
        raise ValueError("active power must be positive")
    return p_mw * (math.tan(math.acos(pf_actual)) - math.tan(math.acos(pf_target)))


def nominal_rating(q_mvar: float, increment: float = 100.0) -> float:
    """Round a computed compensation to the nearest catalogue step (half away from zero)."""
    if increment <= 0:
        raise ValueError("increment must be positive")
    steps = math.floor(abs(q_mvar) / increment + 0.5)
    return math.copysign(steps * increment, q_mvar)


@dataclass(frozen=True)
class CompensationPlan:
    bus: str
    load_active_power_mw: float
    angle_before: float  # rad
    angle_after: float  # rad
    required_q_mvar: float

    @property
    def pf_before(self) -> float:
        return math.cos(self.angle_before)

    @property
    def pf_after(self) -> float:
        return math.cos(self.angle_after)


def plan_compensation(bus: str, p_mw: float, pf_actual: float, pf_target: float) -> CompensationPlan:
    q = required_compensation(p_mw, pf_actual, pf_target)
    return CompensationPlan(bus, p_mw, math.acos(pf_actual), math.acos(pf_target), q)


def apply_svc(network: Network, bus: str, q_injection: float,
              q_limit: float = DEFAULT_SVC_LIMIT_MVAR, device_id: str = "SVC",
              mode: str = "constant_q") -> Network:
    """Return a new network with a fixed-Q SVC at ``bus``.

    A device with the same id is replaced, so calling again re-dispatches the
    setpoint. The input network is left untouched.
    """
    if bus not in network.bus_index:
        raise DanglingReferenceError(f"unknown bus {bus!r}")
    if q_limit < 0:
        raise ValueError("q_limit must be non-negative")
    if abs(q_injection) > q_limit:
        raise SvcLimitError(f"SVC limit exceeded: |{q_injection:.1f}| > {q_limit:.1f} MVAR")
    device = ShuntDevice(device_id, bus, ShuntKind.SVC, float(q_injection), float(q_limit), mode)
    others = [s for s in network.shunts if s.id != device_id]
    return network.with_shunts(others + [device])


def svc_setpoint(network: Network, device_id: str = "SVC") -> float:
    for s in network.shunts:
        if s.id == device_id and s.kind is ShuntKind.SVC:
            return s.q_mvar
    return 0.0
