"""Full Newton-Raphson AC load flow in polar coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .network import (BusKind, Network, ShuntKind, admittance_matrix, base_current,
                      branch_admittances, shunt_admittance_pu)

SQRT3 = math.sqrt(3.0)


class PowerFlowError(RuntimeError):
    """Load flow failed to produce a solution."""


class DivergenceError(PowerFlowError):
    def __init__(self, iterations: int, mismatch: float):
        super().__init__(f"load flow did not converge in {iterations} iterations "
                         f"(max mismatch {mismatch:.3e} pu)")
        self.iterations = iterations
        self.mismatch = mismatch


class SingularJacobianError(PowerFlowError):
    """Jacobian became singular: islanded bus or voltage collapse."""


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 50
    flat_start: bool = True
    enforce_q_limits: bool = True
    # warm start (vm, va) arrays in network bus order; overrides flat_start
    initial: tuple | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PowerQuantities:
    """P, Q, S, signed PF and line current of one metered flow."""

    p_mw: float
    q_mvar: float
    s_mva: float
    pf: float | None  # None marks a no-flow point where PF is undefined
    current_a: float | None

    @property
    def no_flow(self) -> bool:
        return self.pf is None

    def pf_text(self) -> str:
        return "no-flow" if self.pf is None else f"{100 * self.pf:.1f}"


NO_FLOW_MVA = 1e-6


def signed_power_factor(p: float, q: float) -> float | None:
    """|P| / S, negative when P and Q flow in opposite directions; None below
    ``NO_FLOW_MVA`` where the ratio is numerical noise."""
    s = math.hypot(p, q)
    if s < NO_FLOW_MVA:
        return None
    pf = abs(p) / s
    return -pf if p * q < 0 else pf


def power_quantities(p_mw: float, q_mvar: float, nominal_kv: float | None = None) -> PowerQuantities:
    s = math.hypot(p_mw, q_mvar)
    current = None if nominal_kv is None else s * 1e6 / (SQRT3 * nominal_kv * 1e3)
    return PowerQuantities(p_mw, q_mvar, s, signed_power_factor(p_mw, q_mvar), current)


@dataclass
class PowerFlowSolution:
    network: Network
    vm: np.ndarray
    va: np.ndarray
    p_injection_mw: np.ndarray  # sources minus loads, per bus
    q_injection_mvar: np.ndarray
    p_generation_mw: np.ndarray
    q_generation_mvar: np.ndarray
    branch_from_mva: np.ndarray  # complex, leaving the from bus
    branch_to_mva: np.ndarray  # complex, leaving the to bus
    branch_from_a: np.ndarray
    branch_to_a: np.ndarray
    iterations: int
    max_mismatch: float
    switched_to_pq: tuple[str, ...] = field(default_factory=tuple)

    def _i(self, bus_id: str) -> int:
        return self.network.bus_index[self.network.bus(bus_id).id]

    def voltage(self, bus_id: str) -> complex:
        i = self._i(bus_id)
        return self.vm[i] * np.exp(1j * self.va[i])

    def branch_flow(self, branch_id: str, at_bus: str) -> complex:
        """Complex power (MVA) leaving ``at_bus`` into the branch."""
        k = self.network.branch_index[self.network.branch(branch_id).id]
        br = self.network.branches[k]
        if at_bus == br.from_bus:
            return complex(self.branch_from_mva[k])
        if at_bus == br.to_bus:
            return complex(self.branch_to_mva[k])
        raise ValueError(f"branch {branch_id} does not touch bus {at_bus}")

    def absorbed_power(self, bus_id: str) -> complex:
        """Net power (MVA) the bus draws from its branches: load + shunts - sources."""
        bus = self.network.bus(bus_id).id
        total = 0j
        for k, br in enumerate(self.network.branches):
            if not br.in_service:
                continue
            if br.from_bus == bus:
                total -= self.branch_from_mva[k]
            elif br.to_bus == bus:
                total -= self.branch_to_mva[k]
        return complex(total)

    def shunt_power(self, device_id: str) -> complex:
        """Power (MVA) injected into the bus by a shunt device."""
        dev = next(d for d in self.network.shunts if d.id == device_id)
        v2 = self.vm[self._i(dev.bus)] ** 2
        if dev.kind is ShuntKind.SVC:
            scale = v2 if dev.mode == "susceptance" else 1.0
            return complex(0.0, dev.q_mvar * scale)
        y = shunt_admittance_pu(self.network, dev, 1)
        return -v2 * np.conj(y) * self.network.base_mva

    @property
    def branch_losses_mw(self) -> float:
        live = np.array([br.in_service for br in self.network.branches], dtype=bool)
        if not live.any():
            return 0.0
        return float((self.branch_from_mva[live] + self.branch_to_mva[live]).real.sum())

    @property
    def shunt_losses_mw(self) -> float:
        return float(sum(-self.shunt_power(d.id).real for d in self.network.shunts
                         if d.kind is ShuntKind.FILTER))

    @property
    def total_generation_mw(self) -> float:
        return float(self.p_generation_mw.sum())

    @property
    def total_load_mw(self) -> float:
        return float(sum(l.p_mw for l in self.network.loads))


def bus_power_quantities(solution: PowerFlowSolution, bus_id: str) -> PowerQuantities:
    """S = sqrt(P^2 + Q^2), PF = P / S, I = S / (sqrt(3) V) for the power a bus
    draws from the network, with I at the bus nominal voltage."""
    s = solution.absorbed_power(bus_id)
    return power_quantities(s.real, s.imag, solution.network.bus(bus_id).nominal_kv)


def branch_power_quantities(solution: PowerFlowSolution, branch_id: str, at_bus: str) -> PowerQuantities:
    """Quantities of the power delivered into ``at_bus`` through ``branch_id``."""
    s = -solution.branch_flow(branch_id, at_bus)
    return power_quantities(s.real, s.imag, solution.network.bus(at_bus).nominal_kv)


# ---------------------------------------------------------------- solver


def _specified_injections(net: Network, vm: np.ndarray | None = None):
    n = len(net.buses)
    idx = net.bus_index
    p = np.zeros(n)
    q = np.zeros(n)
    for g in net.generators:
        p[idx[g.bus]] += g.p_mw
    for l in net.loads:
        p[idx[l.bus]] -= l.p_mw
        q[idx[l.bus]] -= l.q_mvar
    for d in net.shunts:
        if d.kind is ShuntKind.SVC and d.mode == "constant_q":
            q[idx[d.bus]] += d.q_mvar
    return p / net.base_mva, q / net.base_mva


def _newton(G, B, vm, va, p_spec, q_spec, pvpq, pq, tol, max_it):
    """Inner Newton loop; returns (vm, va, iterations, mismatch)."""
    npvpq = pvpq.shape[0]
    mismatch = math.inf
    for it in range(max_it + 1):
        p, q = kernels.power_injections(vm, va, G, B)
        f = np.concatenate((p[pvpq] - p_spec[pvpq], q[pq] - q_spec[pq]))
        mismatch = float(np.max(np.abs(f))) if f.size else 0.0
        if not math.isfinite(mismatch):
            raise DivergenceError(it, mismatch)
        if mismatch < tol:
            return vm, va, it, mismatch
        if it == max_it:
            break
        J = kernels.jacobian(vm, va, G, B, p, q, pvpq, pq)
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Jacobian (islanded bus or voltage collapse)") from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError("non-finite Newton step (ill-conditioned Jacobian)")
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        if np.any(vm <= 0):
            raise DivergenceError(it + 1, mismatch)
    raise DivergenceError(max_it, mismatch)


def solve_load_flow(net: Network, options: SolverOptions | None = None) -> PowerFlowSolution:
    """Solve the AC load flow; PV buses convert to PQ when a reactive limit binds."""
    opt = options or SolverOptions()
    n = len(net.buses)
    idx = net.bus_index
    Y = admittance_matrix(net, 1)
    G = np.ascontiguousarray(Y.real)
    B = np.ascontiguousarray(Y.imag)
    p_spec, q_spec0 = _specified_injections(net)
    base = net.base_mva

    slack = idx[net.slack.id]
    vset = np.array([b.vm0 for b in net.buses], dtype=float)
    qmin = np.zeros(n)
    qmax = np.zeros(n)
    has_gen = np.zeros(n, dtype=bool)
    for g in net.generators:
        i = idx[g.bus]
        if not has_gen[i]:
            vset[i] = g.vset
        has_gen[i] = True
        qmin[i] += g.q_min
        qmax[i] += g.q_max
    kinds = [b.kind for b in net.buses]
    pv_set = {i for i in range(n) if kinds[i] is BusKind.PV and has_gen[i]}

    if opt.initial is not None:
        vm = np.array(opt.initial[0], dtype=float)
        va = np.array(opt.initial[1], dtype=float)
    elif opt.flat_start:
        vm = np.ones(n)
        va = np.zeros(n)
    else:
        vm = np.array([b.vm0 for b in net.buses], dtype=float)
        va = np.array([b.va0 for b in net.buses], dtype=float)
    va[slack] = 0.0
    vm[slack] = vset[slack]
    for i in pv_set:
        vm[i] = vset[i]

    fixed_q: dict[int, float] = {}  # PV bus -> generator Q (pu) while held at a limit
    switches = {i: 0 for i in pv_set}
    total_it = 0
    for _outer in range(25):
        pv = np.array(sorted(i for i in pv_set if i not in fixed_q), dtype=np.int64)
        pq = np.array([i for i in range(n) if i != slack and i not in pv], dtype=np.int64)
        pvpq = np.concatenate((pv, pq)).astype(np.int64)
        q_spec = q_spec0.copy()
        for i, qg in fixed_q.items():
            q_spec[i] += qg
        for i in pv:
            vm[i] = vset[i]
        vm, va, it, mismatch = _newton(G, B, vm, va, p_spec, q_spec, pvpq, pq,
                                       opt.tolerance, opt.max_iterations - total_it)
        total_it += it
        if not opt.enforce_q_limits or not pv_set:
            break
        _, q_calc = kernels.power_injections(vm, va, G, B)
        changed = False
        for i in sorted(pv_set):
            if switches[i] > 6:
                continue
            if i in fixed_q:
                at_max = fixed_q[i] >= qmax[i] / base
                if (at_max and vm[i] > vset[i]) or (not at_max and vm[i] < vset[i]):
                    del fixed_q[i]
                    switches[i] += 1
                    changed = True
            else:
                qg = q_calc[i] - q_spec0[i]
                if qg > qmax[i] / base + opt.tolerance:
                    fixed_q[i] = qmax[i] / base
                elif qg < qmin[i] / base - opt.tolerance:
                    fixed_q[i] = qmin[i] / base
                else:
                    continue
                switches[i] += 1
                changed = True
        if not changed:
            break

    p_calc, q_calc = kernels.power_injections(vm, va, G, B)
    p_load = np.zeros(n)
    q_other = np.zeros(n)
    for l in net.loads:
        p_load[idx[l.bus]] += l.p_mw
    q_other[:] = -q_spec0 * base  # loads minus constant-Q SVC output
    p_gen = np.where(has_gen | (np.arange(n) == slack), p_calc * base + p_load, 0.0)
    q_gen = np.where(has_gen | (np.arange(n) == slack), q_calc * base + q_other, 0.0)

    v = vm * np.exp(1j * va)
    nbr = len(net.branches)
    s_from = np.zeros(nbr, dtype=complex)
    s_to = np.zeros(nbr, dtype=complex)
    i_from = np.zeros(nbr)
    i_to = np.zeros(nbr)
    for k, br in enumerate(net.branches):
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        yff, yft, ytf, ytt = branch_admittances(br, 1)
        cur_f = yff * v[f] + yft * v[t]
        cur_t = ytf * v[f] + ytt * v[t]
        s_from[k] = v[f] * np.conj(cur_f) * base
        s_to[k] = v[t] * np.conj(cur_t) * base
        i_from[k] = abs(cur_f) * base_current(net.buses[f].nominal_kv, base)
        i_to[k] = abs(cur_t) * base_current(net.buses[t].nominal_kv, base)

    return PowerFlowSolution(
        network=net, vm=vm, va=va,
        p_injection_mw=p_calc * base, q_injection_mvar=q_calc * base,
        p_generation_mw=p_gen, q_generation_mvar=q_gen,
        branch_from_mva=s_from, branch_to_mva=s_to,
        branch_from_a=i_from, branch_to_a=i_to,
        iterations=total_it, max_mismatch=mismatch,
        switched_to_pq=tuple(net.buses[i].id for i in sorted(fixed_q)),
    )
