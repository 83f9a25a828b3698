"""Balanced positive-sequence network model.

All impedances are held in per-unit on a single system MVA base, with each
bus's nominal line-to-line voltage as its voltage base. The declarative form
(a JSON-compatible dict) accepts SI values (ohms, microsiemens, transformer
percent on own rating) and is converted here.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .filters import DEFAULT_QUALITY, FilterDesign, design_single_tuned_filter, filter_from_capacitance

DEFAULT_BASE_MVA = 100.0
DEFAULT_TRANSFORMER_X_PERCENT = 10.0


class NetworkError(ValueError):
    """Base class for network validation failures."""


class DuplicateIdError(NetworkError):
    pass


class DanglingReferenceError(NetworkError):
    pass


class ZeroImpedanceError(NetworkError):
    pass


class NoSlackBusError(NetworkError):
    pass


class MultipleSlackBusError(NetworkError):
    pass


class DisconnectedNetworkError(NetworkError):
    pass


class InvalidValueError(NetworkError):
    pass


class BusKind(str, Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


class BranchKind(str, Enum):
    LINE = "Line"
    TRANSFORMER = "Transformer"


class ShuntKind(str, Enum):
    SVC = "SvcFixedQ"
    FILTER = "SingleTunedFilter"


# ---------------------------------------------------------------- per-unit


def base_impedance(kv: float, base_mva: float) -> float:
    """Impedance base in ohms for a line-to-line kV and a three-phase MVA base."""
    return kv**2 / base_mva


def base_current(kv: float, base_mva: float) -> float:
    """Current base in amperes."""
    return base_mva * 1e6 / (math.sqrt(3.0) * kv * 1e3)


def ohm_to_pu(z_ohm: complex | float, kv: float, base_mva: float):
    return z_ohm / base_impedance(kv, base_mva)


def pu_to_ohm(z_pu: complex | float, kv: float, base_mva: float):
    return z_pu * base_impedance(kv, base_mva)


def siemens_to_pu(y_s: float, kv: float, base_mva: float) -> float:
    return y_s * base_impedance(kv, base_mva)


def pu_to_siemens(y_pu: float, kv: float, base_mva: float) -> float:
    return y_pu / base_impedance(kv, base_mva)


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Bus:
    id: str
    kind: BusKind
    nominal_kv: float
    vm0: float = 1.0
    va0: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    kind: BranchKind = BranchKind.LINE
    in_service: bool = True


@dataclass(frozen=True)
class Load:
    bus: str
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class Generator:
    bus: str
    p_mw: float
    vset: float = 1.0
    q_min: float = -math.inf
    q_max: float = math.inf


@dataclass(frozen=True)
class ShuntDevice:
    """SVC (``q_mvar`` injected at 1 pu) or single-tuned filter."""

    id: str
    bus: str
    kind: ShuntKind
    q_mvar: float = 0.0
    q_limit: float | None = None
    mode: str = "constant_q"  # or "susceptance": injection scales with V^2
    filter: FilterDesign | None = None


@dataclass(frozen=True)
class Network:
    base_mva: float
    base_frequency: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...] = ()
    generators: tuple[Generator, ...] = ()
    shunts: tuple[ShuntDevice, ...] = ()

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[str, int]:
        return {br.id: i for i, br in enumerate(self.branches)}

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind is BusKind.SLACK)

    def bus(self, bus_id: str) -> Bus:
        try:
            return self.buses[self.bus_index[bus_id]]
        except KeyError:
            raise DanglingReferenceError(f"unknown bus {bus_id!r}") from None

    def branch(self, branch_id: str) -> Branch:
        try:
            return self.branches[self.branch_index[branch_id]]
        except KeyError:
            raise DanglingReferenceError(f"unknown branch {branch_id!r}") from None

    def with_shunts(self, shunts) -> Network:
        """Copy of this network with the shunt list replaced."""
        return Network(self.base_mva, self.base_frequency, self.buses, self.branches,
                       self.loads, self.generators, tuple(shunts))

    def with_loads(self, loads) -> Network:
        return Network(self.base_mva, self.base_frequency, self.buses, self.branches,
                       tuple(loads), self.generators, self.shunts)

    def scaled_loads(self, factor: float) -> Network:
        """All loads multiplied by ``factor`` at constant power factor."""
        return self.with_loads(Load(l.bus, l.p_mw * factor, l.q_mvar * factor) for l in self.loads)


# ---------------------------------------------------------------- building


def _num(entry: dict, key: str, default=None, *, where: str) -> float:
    value = entry.get(key, default)
    if value is None:
        if default is None and key not in entry:
            raise InvalidValueError(f"{where}: missing {key!r}")
        return default
    value = float(value)
    if math.isnan(value):
        raise InvalidValueError(f"{where}: {key} is NaN")
    return value


def _limit(value, default: float) -> float:
    return default if value is None else float(value)


def _expand_sub_blocks(spec: dict) -> dict:
    """Instantiate ``sub_blocks.count`` copies of a templated group of elements.

    String fields containing ``{i}`` are formatted with the 1-based copy index.
    """
    blocks = spec.get("sub_blocks")
    if not blocks:
        return spec
    count = int(blocks.get("count", 1))
    if count < 1:
        raise InvalidValueError("sub_blocks.count must be >= 1")
    out = copy.deepcopy({k: v for k, v in spec.items() if k != "sub_blocks"})

    def fill(obj, i):
        if isinstance(obj, str):
            return obj.replace("{i}", str(i))
        if isinstance(obj, dict):
            return {k: fill(v, i) for k, v in obj.items()}
        if isinstance(obj, list):
            return [fill(v, i) for v in obj]
        return obj

    for key in ("buses", "branches", "loads", "generators", "shunts"):
        template = blocks.get(key, [])
        out.setdefault(key, [])
        for i in range(1, count + 1):
            out[key].extend(fill(template, i))
    return out


def _build_filter(entry: dict, kv: float, frequency: float, where: str) -> FilterDesign:
    v_ln = kv * 1e3 / math.sqrt(3.0)
    order = int(entry.get("order", 0))
    quality = float(entry.get("quality", DEFAULT_QUALITY))
    try:
        if "capacitance_f" in entry:
            return filter_from_capacitance(float(entry["capacitance_f"]), v_ln, frequency, order, quality)
        if "capacitance_uf" in entry:
            return filter_from_capacitance(float(entry["capacitance_uf"]) * 1e-6, v_ln, frequency,
                                           order, quality)
        if "q_mvar_per_phase" in entry:
            return design_single_tuned_filter(float(entry["q_mvar_per_phase"]) * 1e6, v_ln, frequency,
                                              order, quality)
    except ValueError as exc:
        raise InvalidValueError(f"{where}: {exc}") from None
    raise InvalidValueError(f"{where}: filter needs capacitance_f, capacitance_uf or q_mvar_per_phase")


def build_network(spec: dict) -> Network:
    """Validate a declarative network description and convert it to per-unit.

    Raises a distinct :class:`NetworkError` subclass for each class of defect.
    """
    spec = _expand_sub_blocks(spec)
    base_mva = float(spec.get("base_mva", DEFAULT_BASE_MVA))
    frequency = float(spec.get("base_frequency_hz", 50.0))
    if not base_mva > 0:
        raise InvalidValueError("base_mva must be positive")
    if not frequency > 0:
        raise InvalidValueError("base_frequency_hz must be positive")

    buses = []
    seen: set[str] = set()
    for entry in spec.get("buses", []):
        bid = str(entry["id"])
        if bid in seen:
            raise DuplicateIdError(f"duplicate bus id {bid!r}")
        seen.add(bid)
        try:
            kind = BusKind(entry.get("kind", "PQ"))
        except ValueError:
            raise InvalidValueError(f"bus {bid}: unknown kind {entry.get('kind')!r}") from None
        kv = _num(entry, "nominal_kv", where=f"bus {bid}")
        vm0 = _num(entry, "vm0", 1.0, where=f"bus {bid}")
        if kv <= 0:
            raise InvalidValueError(f"bus {bid}: nominal_kv must be positive")
        if vm0 <= 0:
            raise InvalidValueError(f"bus {bid}: vm0 must be positive")
        buses.append(Bus(bid, kind, kv, vm0, _num(entry, "va0", 0.0, where=f"bus {bid}")))
    if not buses:
        raise NoSlackBusError("network has no buses")
    slacks = [b for b in buses if b.kind is BusKind.SLACK]
    if not slacks:
        raise NoSlackBusError("no slack bus")
    if len(slacks) > 1:
        raise MultipleSlackBusError("multiple slack buses: " + ", ".join(b.id for b in slacks))
    kv_of = {b.id: b.nominal_kv for b in buses}

    def ref(bus_id, where):
        bus_id = str(bus_id)
        if bus_id not in kv_of:
            raise DanglingReferenceError(f"{where}: unknown bus {bus_id!r}")
        return bus_id

    branches = []
    seen = set()
    for k, entry in enumerate(spec.get("branches", [])):
        f = ref(entry["from"], f"branch #{k}")
        t = ref(entry["to"], f"branch #{k}")
        bid = str(entry.get("id", f"{f}-{t}-{k}"))
        where = f"branch {bid}"
        if bid in seen:
            raise DuplicateIdError(f"duplicate branch id {bid!r}")
        seen.add(bid)
        if f == t:
            raise InvalidValueError(f"{where}: from_bus equals to_bus")
        kind = BranchKind(entry.get("kind", "Line"))
        kv = kv_of[f]
        if "x_pu" in entry or "r_pu" in entry:
            r = _num(entry, "r_pu", 0.0, where=where)
            x = _num(entry, "x_pu", 0.0, where=where)
        elif kind is BranchKind.TRANSFORMER:
            rating = _num(entry, "rating_mva", where=where)
            if rating <= 0:
                raise InvalidValueError(f"{where}: rating_mva must be positive")
            scale = base_mva / rating / 100.0
            r = _num(entry, "r_percent", 0.0, where=where) * scale
            x = _num(entry, "x_percent", DEFAULT_TRANSFORMER_X_PERCENT, where=where) * scale
        else:
            r = ohm_to_pu(_num(entry, "r_ohm", 0.0, where=where), kv, base_mva)
            x = ohm_to_pu(_num(entry, "x_ohm", 0.0, where=where), kv, base_mva)
        if "b_pu" in entry:
            b = _num(entry, "b_pu", where=where)
        else:
            b = siemens_to_pu(_num(entry, "b_us", 0.0, where=where) * 1e-6, kv, base_mva)
        if math.hypot(r, x) == 0.0:
            raise ZeroImpedanceError(f"{where}: zero series impedance")
        tap = _num(entry, "tap", 1.0, where=where)
        if tap <= 0:
            raise InvalidValueError(f"{where}: tap ratio must be positive")
        branches.append(Branch(bid, f, t, r, x, b, tap, kind, bool(entry.get("in_service", True))))

    loads = []
    for k, entry in enumerate(spec.get("loads", [])):
        where = f"load #{k}"
        loads.append(Load(ref(entry["bus"], where), _num(entry, "p_mw", 0.0, where=where),
                          _num(entry, "q_mvar", 0.0, where=where)))

    generators = []
    for k, entry in enumerate(spec.get("generators", [])):
        where = f"generator #{k}"
        g = Generator(ref(entry["bus"], where), _num(entry, "p_mw", 0.0, where=where),
                      _num(entry, "vset", 1.0, where=where),
                      _limit(entry.get("q_min_mvar"), -math.inf),
                      _limit(entry.get("q_max_mvar"), math.inf))
        if g.q_min > g.q_max:
            raise InvalidValueError(f"{where}: q_min exceeds q_max")
        if g.vset <= 0:
            raise InvalidValueError(f"{where}: vset must be positive")
        generators.append(g)

    shunts = []
    seen = set()
    for k, entry in enumerate(spec.get("shunts", [])):
        sid = str(entry.get("id", f"shunt{k}"))
        where = f"shunt {sid}"
        if sid in seen:
            raise DuplicateIdError(f"duplicate shunt id {sid!r}")
        seen.add(sid)
        bus = ref(entry["bus"], where)
        kind = ShuntKind(entry.get("kind", "SvcFixedQ"))
        if kind is ShuntKind.SVC:
            q = _num(entry, "q_mvar", 0.0, where=where)
            lim = entry.get("q_limit_mvar")
            lim = None if lim is None else float(lim)
            if lim is not None and (lim < 0 or abs(q) > lim):
                raise InvalidValueError(f"{where}: SVC setpoint outside its limit")
            mode = entry.get("mode", "constant_q")
            if mode not in ("constant_q", "susceptance"):
                raise InvalidValueError(f"{where}: unknown SVC mode {mode!r}")
            shunts.append(ShuntDevice(sid, bus, kind, q, lim, mode))
        else:
            design = _build_filter(entry, kv_of[bus], frequency, where)
            shunts.append(ShuntDevice(sid, bus, kind, filter=design))

    net = Network(base_mva, frequency, tuple(buses), tuple(branches), tuple(loads),
                  tuple(generators), tuple(shunts))
    _check_connected(net)
    return net


def _check_connected(net: Network) -> None:
    n = len(net.buses)
    if n == 1:
        return
    idx = net.bus_index
    live = [br for br in net.branches if br.in_service]
    rows = [idx[br.from_bus] for br in live]
    cols = [idx[br.to_bus] for br in live]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    if count > 1:
        island = [net.buses[i].id for i in range(n) if labels[i] != labels[idx[net.slack.id]]]
        raise DisconnectedNetworkError("buses not connected to the slack: " + ", ".join(island))


def network_to_spec(net: Network) -> dict:
    """Declarative form of ``net`` with impedances in per-unit."""

    def limit(v):
        return None if math.isinf(v) else v

    shunts = []
    for s in net.shunts:
        if s.kind is ShuntKind.SVC:
            shunts.append({"id": s.id, "bus": s.bus, "kind": s.kind.value, "q_mvar": s.q_mvar,
                           "q_limit_mvar": s.q_limit, "mode": s.mode})
        else:
            shunts.append({"id": s.id, "bus": s.bus, "kind": s.kind.value,
                           "order": s.filter.target_order, "capacitance_f": s.filter.capacitance,
                           "quality": s.filter.quality})
    return {
        "base_mva": net.base_mva,
        "base_frequency_hz": net.base_frequency,
        "buses": [{"id": b.id, "kind": b.kind.value, "nominal_kv": b.nominal_kv, "vm0": b.vm0,
                   "va0": b.va0} for b in net.buses],
        "branches": [{"id": br.id, "from": br.from_bus, "to": br.to_bus, "kind": br.kind.value,
                      "r_pu": br.r, "x_pu": br.x, "b_pu": br.b, "tap": br.tap,
                      "in_service": br.in_service} for br in net.branches],
        "loads": [{"bus": l.bus, "p_mw": l.p_mw, "q_mvar": l.q_mvar} for l in net.loads],
        "generators": [{"bus": g.bus, "p_mw": g.p_mw, "vset": g.vset, "q_min_mvar": limit(g.q_min),
                        "q_max_mvar": limit(g.q_max)} for g in net.generators],
        "shunts": shunts,
    }


def load_spec(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_network(path) -> Network:
    return build_network(load_spec(path))


def save_network(net: Network, path, extra: dict | None = None) -> None:
    spec = network_to_spec(net)
    if extra:
        spec.update(extra)
    Path(path).write_text(json.dumps(spec, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- admittance


def shunt_admittance_pu(net: Network, device: ShuntDevice, harmonic_order: float = 1) -> complex:
    """Constant-impedance admittance a shunt device adds at ``harmonic_order``.

    Constant-Q SVCs are power injections, not admittances, and contribute
    nothing here; susceptance-mode SVCs appear at the fundamental only.
    """
    if device.kind is ShuntKind.FILTER:
        zb = base_impedance(net.bus(device.bus).nominal_kv, net.base_mva)
        return zb / device.filter.impedance(harmonic_order)
    if device.mode == "susceptance" and harmonic_order == 1:
        return 1j * device.q_mvar / net.base_mva
    return 0j


def admittance_matrix(net: Network, harmonic_order: float = 1) -> np.ndarray:
    """Dense nodal admittance matrix in per-unit.

    Series reactance scales with the harmonic order, line charging likewise;
    resistance is held constant across orders.
    """
    if harmonic_order < 1:
        raise ValueError("harmonic_order must be >= 1")
    h = float(harmonic_order)
    n = len(net.buses)
    Y = np.zeros((n, n), dtype=complex)
    idx = net.bus_index
    for br in net.branches:
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x * h)
        ysh = 0.5j * br.b * h
        Y[f, f] += (ys + ysh) / br.tap**2
        Y[t, t] += ys + ysh
        Y[f, t] -= ys / br.tap
        Y[t, f] -= ys / br.tap
    for dev in net.shunts:
        Y[idx[dev.bus], idx[dev.bus]] += shunt_admittance_pu(net, dev, h)
    return Y


def branch_admittances(br: Branch, harmonic_order: float = 1) -> tuple[complex, complex, complex, complex]:
    """(Yff, Yft, Ytf, Ytt) of the branch two-port."""
    h = float(harmonic_order)
    ys = 1.0 / complex(br.r, br.x * h)
    ysh = 0.5j * br.b * h
    return (ys + ysh) / br.tap**2, -ys / br.tap, -ys / br.tap, ys + ysh
