"""Voltage stability: the literal %B ratio and a load-scaling collapse margin."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import BusKind, Network
from .powerflow import PowerFlowError, PowerFlowSolution, SolverOptions, solve_load_flow


class BaseCaseInfeasibleError(PowerFlowError):
    pass


def literal_percent_b(v_stable: float, v_operating: float) -> float:
    """(V_stable - V_operating) / V_stable * 100, sign preserved."""
    if v_stable == 0:
        raise ValueError("v_stable must be non-zero")
    if v_stable < 0:
        raise ValueError("v_stable must be positive")
    return (v_stable - v_operating) / v_stable * 100.0


def voltage_stability_index(v_stable: float, v_operating: float) -> float:
    """Operating voltage as a percentage of the stable reference (100 - literal %B)."""
    return 100.0 - literal_percent_b(v_stable, v_operating)


@dataclass(frozen=True)
class StabilityMargin:
    bus: str
    v_stable: float
    v_operating: float
    literal_percent_b: float
    loading_margin_percent: float
    collapse_scale: float
    reached_scale_limit: bool = False
    nose_curve: tuple = field(default=(), repr=False)  # ((scale, V at bus), ...)

    @property
    def voltage_stability_index(self) -> float:
        return voltage_stability_index(self.v_stable, self.v_operating)


def _lowest_pq_bus(net: Network, sol: PowerFlowSolution) -> str:
    pq = [i for i, b in enumerate(net.buses) if b.kind is BusKind.PQ]
    if not pq:
        return net.slack.id
    return net.buses[min(pq, key=lambda i: sol.vm[i])].id


def _try_solve(net: Network, scale: float, warm: PowerFlowSolution | None, max_iterations: int):
    scaled = net.scaled_loads(scale)
    attempts = []
    if warm is not None:
        attempts.append(SolverOptions(max_iterations=max_iterations, initial=(warm.vm, warm.va)))
    attempts.append(SolverOptions(max_iterations=max_iterations))
    for opts in attempts:
        try:
            return solve_load_flow(scaled, opts)
        except PowerFlowError:
            continue
    return None


def loading_margin(net: Network, step: float = 0.01, refine_tolerance: float = 1e-4, *,
                   bus: str | None = None, v_stable: float = 1.0, max_scale: float = 100.0,
                   max_iterations: int = 30) -> StabilityMargin:
    """Scale every load by lambda (constant power factor) until the load flow
    fails, then bisect the last feasible / first infeasible bracket.

    Each infeasible candidate is retried from the last feasible solution and
    from a flat start before it is declared infeasible.
    """
    if step <= 0 or refine_tolerance <= 0:
        raise ValueError("step and refine_tolerance must be positive")
    base = _try_solve(net, 1.0, None, max_iterations)
    if base is None:
        raise BaseCaseInfeasibleError("base case load flow does not solve")
    bus = bus or _lowest_pq_bus(net, base)
    k = net.bus_index[net.bus(bus).id]
    curve = [(1.0, float(base.vm[k]))]

    lo, last = 1.0, base
    hi = None
    n_steps = int(np.ceil((max_scale - 1.0) / step))
    for i in range(1, n_steps + 1):
        lam = min(1.0 + i * step, max_scale)
        sol = _try_solve(net, lam, last, max_iterations)
        if sol is None:
            hi = lam
            break
        lo, last = lam, sol
        curve.append((lam, float(sol.vm[k])))
    if hi is None:
        return StabilityMargin(bus, v_stable, float(base.vm[k]),
                               literal_percent_b(v_stable, float(base.vm[k])),
                               (lo - 1.0) / lo * 100.0, lo, True, tuple(curve))
    while hi - lo > refine_tolerance:
        mid = 0.5 * (lo + hi)
        sol = _try_solve(net, mid, last, max_iterations)
        if sol is None:
            hi = mid
        else:
            lo, last = mid, sol
            curve.append((mid, float(sol.vm[k])))
    collapse = 0.5 * (lo + hi)
    return StabilityMargin(bus, v_stable, float(base.vm[k]),
                           literal_percent_b(v_stable, float(base.vm[k])),
                           (collapse - 1.0) / collapse * 100.0, collapse, False,
                           tuple(sorted(curve)))
