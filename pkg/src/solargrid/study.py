"""End-to-end compliance study: PF correction, harmonic mitigation, stability.

The pipeline is fixed: solve, compensate PF with an SVC if a meter is below
threshold, scan harmonics, insert the case's filter bank if any bus breaks its
IEEE 519 limit, confirm with a final load flow, then compute margins. Every
stage keeps its own network so each reported number can be recomputed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .compensation import (DEFAULT_SVC_LIMIT_MVAR, SvcLimitError, apply_svc, plan_compensation,
                           svc_setpoint)
from .harmonics import (IEEE519_VOLTAGE_LIMITS, HarmonicReport, HarmonicSource, add_filter,
                        harmonic_scan, ieee519_check)
from .network import Network, build_network, load_spec
from .powerflow import (PowerFlowError, PowerFlowSolution, PowerQuantities, branch_power_quantities,
                        bus_power_quantities, solve_load_flow)
from .stability import StabilityMargin, loading_margin

SVC_ID = "SVC"


class StudyError(RuntimeError):
    """A solver failure, tagged with the stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Meter:
    """A PF measuring point.

    With ``branch`` set it reads the power delivered into ``bus`` through that
    branch; otherwise the net power the bus draws from the network.
    """

    name: str
    bus: str
    branch: str | None = None

    def read(self, solution: PowerFlowSolution) -> PowerQuantities:
        if self.branch is None:
            return bus_power_quantities(solution, self.bus)
        return branch_power_quantities(solution, self.branch, self.bus)

    @classmethod
    def from_dict(cls, data: dict) -> Meter:
        return cls(str(data.get("name", data["bus"])), str(data["bus"]), data.get("branch"))


@dataclass(frozen=True)
class FilterSlot:
    bus: str
    order: int
    capacitance: float  # F per phase
    quality: float = 50.0

    @classmethod
    def from_dict(cls, data: dict) -> FilterSlot:
        if "capacitance_uf" in data:
            c = float(data["capacitance_uf"]) * 1e-6
        else:
            c = float(data["capacitance_f"])
        return cls(str(data["bus"]), int(data["order"]), c, float(data.get("quality", 50.0)))


@dataclass(frozen=True)
class StudyPolicy:
    pf_threshold: float = 0.95
    pf_headroom: float = 1e-4  # SVC sizing aims slightly above the threshold
    thd_limits: tuple = IEEE519_VOLTAGE_LIMITS
    monitored: tuple | None = None  # meter names or bus ids; None = every case meter
    compensation_bus: str | None = None
    compensation_meter: str | None = None
    svc_limit_mvar: float = DEFAULT_SVC_LIMIT_MVAR
    q_override: float | None = None
    filters_enabled: bool = True
    retrim_after_filters: bool = True
    harmonic_orders: tuple | None = None
    stability_bus: str | None = None
    stability_step: float = 0.1
    v_stable: float = 1.0
    index_threshold: float = 95.0
    margin_threshold: float = 95.0
    max_svc_iterations: int = 12

    def __post_init__(self):
        if not 0 < self.pf_threshold <= 1:
            raise ValueError("pf_threshold must lie in (0, 1]")
        if self.svc_limit_mvar < 0:
            raise ValueError("svc_limit_mvar must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> StudyPolicy:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown policy keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if "thd_limits" in data:
            data["thd_limits"] = tuple((math.inf if u is None else float(u), float(l))
                                       for u, l in data["thd_limits"])
        for key in ("monitored", "harmonic_orders"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    def updated(self, **overrides) -> StudyPolicy:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class StudyCase:
    network: Network
    meters: tuple[Meter, ...] = ()
    sources: tuple[HarmonicSource, ...] = ()
    filter_bank: tuple[FilterSlot, ...] = ()
    policy: StudyPolicy = StudyPolicy()
    name: str = "case"


def case_from_spec(spec: dict, name: str = "case") -> StudyCase:
    study = spec.get("study", {})
    net = build_network({k: v for k, v in spec.items() if k != "study"})
    meters = tuple(Meter.from_dict(m) for m in study.get("meters", []))
    for m in meters:
        net.bus(m.bus)
        if m.branch is not None:
            net.branch(m.branch)
    sources = tuple(HarmonicSource.from_dict(s) for s in study.get("harmonic_sources", []))
    bank = tuple(FilterSlot.from_dict(f) for f in study.get("filter_bank", []))
    policy = StudyPolicy.from_dict(study.get("policy", {}))
    if study.get("compensation_bus") and policy.compensation_bus is None:
        policy = replace(policy, compensation_bus=study["compensation_bus"])
    return StudyCase(net, meters, sources, bank, policy, name)


def load_case(path) -> StudyCase:
    return case_from_spec(load_spec(path), Path(path).stem)


# ---------------------------------------------------------------- report types


@dataclass
class Stage:
    name: str
    network: Network
    solution: PowerFlowSolution
    meters: dict  # meter name -> PowerQuantities
    buses: dict  # bus id -> PowerQuantities (net absorbed)
    harmonics: HarmonicReport | None = None
    thd_verdicts: dict = field(default_factory=dict)

    @property
    def svc_mvar(self) -> float:
        return svc_setpoint(self.network, SVC_ID)


@dataclass(frozen=True)
class ComplianceRow:
    parameter: str
    location: str
    requirement: str
    value: float | None
    passed: bool
    note: str = ""


@dataclass
class StudyReport:
    case_name: str
    policy: StudyPolicy
    stages: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    compliance: list = field(default_factory=list)
    margin: StabilityMargin | None = None
    failures: list = field(default_factory=list)  # problems outside the compliance table
    overcompensated: list = field(default_factory=list)  # meter names

    @property
    def final(self) -> Stage:
        return self.stages[-1]

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def failed_checks(self) -> list[str]:
        out = [f"{r.parameter} @ {r.location}" for r in self.compliance if not r.passed]
        return out + list(self.failures)

    @property
    def passed(self) -> bool:
        return not self.failed_checks


# ---------------------------------------------------------------- pipeline


def _solve(net: Network, stage: str) -> PowerFlowSolution:
    try:
        return solve_load_flow(net)
    except PowerFlowError as exc:
        raise StudyError(stage, exc) from exc


def snapshot(name: str, net: Network, sol: PowerFlowSolution, meters) -> Stage:
    return Stage(name, net, sol, {m.name: m.read(sol) for m in meters},
                 {b.id: bus_power_quantities(sol, b.id) for b in net.buses})


def _pf_ok(q: PowerQuantities, threshold: float) -> bool:
    return q.pf is None or abs(q.pf) >= threshold


def _monitored(case: StudyCase, policy: StudyPolicy) -> tuple[Meter, ...]:
    meters = list(case.meters)
    if policy.monitored is None:
        return tuple(meters) or tuple(Meter(b.id, b.id) for b in case.network.buses
                                      if case.network.loads and any(l.bus == b.id
                                                                    for l in case.network.loads))
    by_name = {m.name: m for m in meters}
    return tuple(by_name.get(key, Meter(key, key)) for key in policy.monitored)


def _pick_meter(meters, readings: dict, bus: str, policy: StudyPolicy) -> Meter:
    if policy.compensation_meter is not None:
        return next(m for m in meters if m.name == policy.compensation_meter)
    failing = [m for m in meters if not _pf_ok(readings[m.name], policy.pf_threshold)]
    pool = failing or list(meters)
    local = [m for m in pool if m.bus == bus]
    return local[0] if local else min(pool, key=lambda m: abs(readings[m.name].pf or 1.0))


def _size_svc(net: Network, meter: Meter, bus: str, policy: StudyPolicy, stage: str, report: StudyReport):
    """Adjust the SVC until ``meter`` reads |PF| >= threshold.

    The first correction is the textbook Q_c = P (tan t1 - tan t2) against the
    meter reading; later ones divide the remaining meter error by the measured
    meter/SVC sensitivity, since a meter away from the SVC sees only part of it.
    Returns (network, solution); the network may be unchanged.
    """
    target = min(policy.pf_threshold + policy.pf_headroom, 1.0)
    limit = policy.svc_limit_mvar
    q_svc = svc_setpoint(net, SVC_ID)
    cur = net
    sol = _solve(cur, stage)
    reading = meter.read(sol)
    sensitivity = -1.0
    prev = None
    for it in range(policy.max_svc_iterations):
        if _pf_ok(reading, policy.pf_threshold):
            return cur, sol
        p = abs(reading.p_mw)
        q_goal = math.copysign(p * math.tan(math.acos(target)), reading.q_mvar)
        if it == 0 and reading.pf is not None and reading.pf > 0 and reading.p_mw > 0:
            plan = plan_compensation(meter.bus, p, reading.pf, target)
            report.actions.append(
                f"{stage}: Q_c = P(tan t1 - tan t2) = {p:.2f} MW x "
                f"({math.tan(plan.angle_before):.4f} - {math.tan(plan.angle_after):.4f}) "
                f"= {plan.required_q_mvar:.1f} MVAR against meter '{meter.name}'")
        if prev is not None and abs(q_svc - prev[0]) > 1e-9:
            s = (reading.q_mvar - prev[1]) / (q_svc - prev[0])
            if abs(s) > 1e-6:
                sensitivity = s
        delta = (q_goal - reading.q_mvar) / sensitivity
        new_q = min(max(q_svc + delta, -limit), limit)
        if prev is not None and new_q == q_svc:
            break  # pinned at the limit
        prev = (q_svc, reading.q_mvar)
        q_svc = new_q
        cur = apply_svc(net, bus, q_svc, limit, SVC_ID)
        sol = _solve(cur, stage)
        reading = meter.read(sol)
    if not _pf_ok(reading, policy.pf_threshold):
        report.failures.append(
            f"compensation infeasible: meter '{meter.name}' PF {reading.pf_text()}% with SVC at "
            f"{q_svc:.1f} MVAR (limit +/-{limit:.0f})")
    return cur, sol


def _scan(stage: Stage, case: StudyCase, policy: StudyPolicy) -> None:
    if not case.sources:
        return
    orders = policy.harmonic_orders or tuple(sorted({h for s in case.sources for h in s.spectrum}))
    try:
        stage.harmonics = harmonic_scan(stage.network, case.sources, orders, stage.solution)
    except Exception as exc:  # resonance is a solver failure for the study
        raise StudyError(stage.name, exc) from exc
    slack = stage.network.slack.id  # held at zero harmonic voltage by construction
    stage.thd_verdicts = {b: v for b, v in ieee519_check(stage.harmonics, limits=policy.thd_limits).items()
                          if b != slack}


def insert_filter_bank(net: Network, bank) -> Network:
    for k, slot in enumerate(bank, start=1):
        net = add_filter(net, slot.bus, slot.order, capacitance=slot.capacitance,
                         quality=slot.quality, device_id=f"F{k}_{slot.bus}_h{slot.order}")
    return net


def run_study(case: StudyCase, policy: StudyPolicy | None = None) -> StudyReport:
    policy = policy or case.policy
    meters = _monitored(case, policy)
    report = StudyReport(case.name, policy)
    thr = policy.pf_threshold
    comp_bus = policy.compensation_bus or (meters[0].bus if meters else None)

    net = case.network
    base = snapshot("base", net, _solve(net, "base"), meters)
    report.stages.append(base)
    _scan(base, case, policy)

    # PF correction
    if any(not _pf_ok(q, thr) for q in base.meters.values()) and comp_bus is not None:
        if policy.q_override is not None:
            q = float(policy.q_override)
            try:
                net = apply_svc(net, comp_bus, q, policy.svc_limit_mvar, SVC_ID)
            except SvcLimitError as exc:
                report.failures.append(f"compensation infeasible: {exc}")
            else:
                report.actions.append(f"after_svc: fixed SVC override {q:+.1f} MVAR at {comp_bus}")
            sol = _solve(net, "after_svc")
        else:
            meter = _pick_meter(meters, base.meters, comp_bus, policy)
            net, sol = _size_svc(net, meter, comp_bus, policy, "after_svc", report)
        if svc_setpoint(net, SVC_ID) != 0.0:
            report.actions.append(f"after_svc: SVC at {comp_bus} set to {svc_setpoint(net, SVC_ID):+.1f} MVAR")
        report.stages.append(snapshot("after_svc", net, sol, meters))
        _scan(report.final, case, policy)

    # harmonics
    thd_fail = any(not v.passed for v in report.final.thd_verdicts.values())
    if thd_fail and policy.filters_enabled and case.filter_bank:
        net = insert_filter_bank(net, case.filter_bank)
        for slot in case.filter_bank:
            report.actions.append(f"after_filters: filter h={slot.order} at {slot.bus}, "
                                  f"C={slot.capacitance * 1e6:.2f} uF, quality {slot.quality:g}")
        sol = _solve(net, "after_filters")
        if policy.q_override is None and policy.retrim_after_filters and comp_bus is not None:
            readings = {m.name: m.read(sol) for m in meters}
            if any(not _pf_ok(q, thr) for q in readings.values()):
                before = svc_setpoint(net, SVC_ID)
                meter = _pick_meter(meters, readings, comp_bus, policy)
                net, sol = _size_svc(net, meter, comp_bus, policy, "after_filters", report)
                after = svc_setpoint(net, SVC_ID)
                if after != before:
                    report.actions.append(f"after_filters: SVC re-trimmed {before:+.1f} -> {after:+.1f} MVAR "
                                          "for the filters' fundamental reactive output")
        stage = snapshot("after_filters", net, sol, meters)
        report.stages.append(stage)
        _scan(stage, case, policy)

    # stability on the final network
    final = report.final
    try:
        report.margin = loading_margin(final.network, step=policy.stability_step,
                                       bus=policy.stability_bus, v_stable=policy.v_stable)
    except PowerFlowError as exc:
        raise StudyError("stability", exc) from exc

    _assemble_compliance(report, meters)
    return report


def _assemble_compliance(report: StudyReport, meters) -> None:
    policy = report.policy
    final = report.final
    rows = []
    for bus, verdict in final.thd_verdicts.items():
        rows.append(ComplianceRow("Voltage THD", bus, f"<= {verdict.limit_pct:g}%",
                                  verdict.thd_pct, verdict.passed))
    pct = 100 * policy.pf_threshold
    for m in meters:
        q = final.meters[m.name]
        note = ""
        if q.pf is not None and q.pf < 0 and abs(q.pf) < policy.pf_threshold:
            note = "overcompensated"
            report.overcompensated.append(m.name)
        value = None if q.pf is None else 100 * q.pf
        rows.append(ComplianceRow("Power Factor (PF)", m.name, f">= {pct:g}% leading/lagging",
                                  value, _pf_ok(q, policy.pf_threshold), note))
    mg = report.margin
    if mg is not None:
        rows.append(ComplianceRow("Voltage Stability (% Index)", mg.bus, f">= {policy.index_threshold:g}%",
                                  mg.voltage_stability_index,
                                  mg.voltage_stability_index >= policy.index_threshold))
        note = "scan stopped at the scale limit" if mg.reached_scale_limit else ""
        rows.append(ComplianceRow("Voltage %B (Reserve Margin)", mg.bus, f">= {policy.margin_threshold:g}%",
                                  mg.loading_margin_percent,
                                  mg.loading_margin_percent >= policy.margin_threshold, note))
    report.compliance = rows


# ---------------------------------------------------------------- export


def _fmt(x: float | None, nd: int = 3) -> str:
    if x is None:
        return ""
    return f"{x:.{nd}f}"


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def loadflow_rows(stage: Stage):
    """(kind, id, MW, Mvar, Amp, %PF, V pu) rows; meters first, then buses."""
    for name, q in stage.meters.items():
        yield "meter", name, q.p_mw, q.q_mvar, q.current_a, q.pf, None
    for bus, q in stage.buses.items():
        yield "bus", bus, q.p_mw, q.q_mvar, q.current_a, q.pf, float(abs(stage.solution.voltage(bus)))


LOADFLOW_HEADER = ("kind", "id", "stage", "mw", "mvar", "amp", "pf_pct", "v_pu")
HARMONICS_HEADER = ("bus", "order", "vh_pct", "thd_pct")
COMPLIANCE_HEADER = ("parameter", "location", "requirement", "value_pct", "status", "note")


def export_report(report: StudyReport, directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stage in report.stages:
        p = out / f"loadflow_{stage.name}.csv"
        _write_csv(p, LOADFLOW_HEADER,
                   [(k, i, stage.name, _fmt(mw), _fmt(mvar), _fmt(a, 1), _fmt(None if pf is None else 100 * pf, 2),
                     _fmt(v, 5)) for k, i, mw, mvar, a, pf, v in loadflow_rows(stage)])
        written.append(p)
        p = out / f"harmonics_{stage.name}.csv"
        rows = [] if stage.harmonics is None else [
            (b, h, _fmt(v, 5), _fmt(t, 5)) for b, h, v, t in stage.harmonics.rows()]
        _write_csv(p, HARMONICS_HEADER, rows)
        written.append(p)
    p = out / "compliance.csv"
    _write_csv(p, COMPLIANCE_HEADER,
               [(r.parameter, r.location, r.requirement, _fmt(r.value, 3), "PASS" if r.passed else "FAIL",
                 r.note) for r in report.compliance])
    written.append(p)
    p = out / "summary.txt"
    p.write_text(summary_text(report), encoding="utf-8")
    written.append(p)
    return written


def summary_text(report: StudyReport) -> str:
    lines = [f"Study: {report.case_name}", f"PF threshold: {report.policy.pf_threshold:g}", ""]
    for stage in report.stages:
        lines.append(f"[{stage.name}]")
        lines.append(f"{'ID':<16}{'MW':>12}{'Mvar':>12}{'Amp':>12}{'%PF':>9}")
        for kind, ident, mw, mvar, amp, pf, _v in loadflow_rows(stage):
            label = ident if kind == "meter" else f"bus {ident}"
            pf_txt = "no-flow" if pf is None else f"{100 * pf:.1f}"
            lines.append(f"{label:<16}{mw:>12.2f}{mvar:>12.2f}{(amp or 0.0):>12.1f}{pf_txt:>9}")
        if stage.harmonics is not None:
            thd = ", ".join(f"{b} {t:.2f}%" for b, t in stage.harmonics.thd_pct.items())
            lines.append(f"THD: {thd}")
        lines.append("")
    if report.actions:
        lines.append("Actions:")
        lines += [f"  - {a}" for a in report.actions]
    else:
        lines.append("Actions: none")
    lines.append("")
    mg = report.margin
    if mg is not None:
        lines.append(f"Stability at {mg.bus}: V_op {mg.v_operating:.4f} pu, collapse at load x{mg.collapse_scale:.4f}")
        lines.append(f"  loading margin (reserve %B) {mg.loading_margin_percent:.2f}%")
        lines.append(f"  literal (V_stable - V_op)/V_stable x 100 = {mg.literal_percent_b:.3f}% "
                     "(a different quantity from the reserve margin; both reported)")
        lines.append("")
    lines.append("Compliance:")
    for r in report.compliance:
        val = "n/a" if r.value is None else f"{r.value:.2f}%"
        extra = f" [{r.note}]" if r.note else ""
        lines.append(f"  {'PASS' if r.passed else 'FAIL'}  {r.parameter} @ {r.location}: {val} "
                     f"(req {r.requirement}){extra}")
    for f in report.failures:
        lines.append(f"  FAIL  {f}")
    lines.append("")
    lines.append("RESULT: " + ("COMPLIANT" if report.passed else
                               "NON-COMPLIANT (" + "; ".join(report.failed_checks) + ")"))
    return "\n".join(lines) + "\n"


def policy_to_dict(policy: StudyPolicy) -> dict:
    d = asdict(policy)
    d["thd_limits"] = [[None if math.isinf(u) else u, l] for u, l in policy.thd_limits]
    return d


def load_policy(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
