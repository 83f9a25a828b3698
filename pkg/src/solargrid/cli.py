"""Command-line entry point: ``solargrid <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .compensation import SvcLimitError, apply_svc, plan_compensation
from .harmonics import harmonic_scan, ieee519_check
from .network import NetworkError, load_spec, network_to_spec
from .powerflow import PowerFlowError, solve_load_flow
from .sizing import PlantParams, size_plant
from .stability import loading_margin
from .study import (Meter, StudyError, StudyPolicy, case_from_spec, export_report, insert_filter_bank,
                    load_policy, loadflow_rows, policy_to_dict, run_study, snapshot, summary_text)
from .svc_rl import Agent, EnvConfig, Hyperparameters, evaluate_episode, train_agent

EXIT_OK, EXIT_NONCOMPLIANT, EXIT_ERROR = 0, 1, 2
REFERENCE_NAMES = {"reference", "reference_case", "reference_case.json"}


def reference_case_path() -> Path:
    return Path(str(resources.files("solargrid") / "data" / "reference_case.json"))


def resolve_case(arg: str) -> Path:
    p = Path(arg)
    if not p.exists() and p.name in REFERENCE_NAMES:
        return reference_case_path()
    return p


def _load(arg: str):
    path = resolve_case(arg)
    spec = load_spec(path)
    return spec, case_from_spec(spec, path.stem)


def _out_dir(arg) -> Path:
    p = Path(arg)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- subcommands


def cmd_sizing(args) -> int:
    data = json.loads(Path(args.params).read_text()) if args.params else {}
    report = size_plant(PlantParams.from_dict(data))
    rows = list(report.rows())
    width = max(len(r[0]) for r in rows)
    for name, value, unit in rows:
        print(f"{name:<{width}}  {value:>14.4f} {unit}")
    if args.out:
        _write_csv(Path(args.out), ("quantity", "value", "unit"), [(n, f"{v:.6f}", u) for n, v, u in rows])
    return EXIT_OK


def cmd_loadflow(args) -> int:
    _spec, case = _load(args.case)
    sol = solve_load_flow(case.network)
    stage = snapshot("loadflow", case.network, sol, case.meters)
    print(f"converged in {sol.iterations} iterations, max mismatch {sol.max_mismatch:.2e} pu")
    print(f"{'ID':<16}{'MW':>12}{'Mvar':>12}{'Amp':>12}{'%PF':>9}{'V pu':>9}")
    rows = []
    for kind, ident, mw, mvar, amp, pf, v in loadflow_rows(stage):
        label = ident if kind == "meter" else f"bus {ident}"
        pf_txt = "no-flow" if pf is None else f"{100 * pf:.1f}"
        v_txt = "" if v is None else f"{v:.4f}"
        print(f"{label:<16}{mw:>12.2f}{mvar:>12.2f}{(amp or 0.0):>12.1f}{pf_txt:>9}{v_txt:>9}")
        rows.append((kind, ident, f"{mw:.3f}", f"{mvar:.3f}", "" if amp is None else f"{amp:.1f}",
                     "" if pf is None else f"{100 * pf:.2f}", "" if v is None else f"{v:.5f}"))
    _write_csv(_out_dir(args.out) / "loadflow.csv",
               ("kind", "id", "mw", "mvar", "amp", "pf_pct", "v_pu"), rows)
    return EXIT_OK


def cmd_compensate(args) -> int:
    spec, case = _load(args.case)
    net = case.network
    sol = solve_load_flow(net)
    meter = next((m for m in case.meters if (args.meter and m.name == args.meter)
                  or (not args.meter and m.bus == args.bus)), None)
    if args.meter and meter is None:
        print(f"error: no meter named {args.meter!r}", file=sys.stderr)
        return EXIT_ERROR
    meter = meter or Meter(args.bus, args.bus)
    q = meter.read(sol)
    if q.pf is None or q.pf <= 0 or q.p_mw <= 0:
        print(f"meter '{meter.name}' reads PF {q.pf_text()}%; Q_c = P(tan t1 - tan t2) needs a "
              "lagging reading with positive P", file=sys.stderr)
        return EXIT_ERROR
    plan = plan_compensation(args.bus, q.p_mw, q.pf, args.target_pf)
    print(f"meter '{meter.name}': P = {q.p_mw:.2f} MW, Q = {q.q_mvar:.2f} Mvar, PF {100 * q.pf:.2f}%")
    print(f"Q_c = {q.p_mw:.2f} x (tan {plan.angle_before:.4f} - tan {plan.angle_after:.4f}) "
          f"= {plan.required_q_mvar:.1f} MVAR at {args.bus}")
    try:
        new = apply_svc(net, args.bus, plan.required_q_mvar, args.q_limit)
    except SvcLimitError as exc:
        print(f"compensation infeasible: {exc}", file=sys.stderr)
        return EXIT_NONCOMPLIANT
    after = meter.read(solve_load_flow(new))
    print(f"after: PF {after.pf_text()}% at meter '{meter.name}'")
    out = network_to_spec(new)
    if "study" in spec:
        out["study"] = spec["study"]
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_harmonics(args) -> int:
    _spec, case = _load(args.case)
    if not case.sources:
        print("case declares no harmonic sources", file=sys.stderr)
        return EXIT_ERROR
    net = insert_filter_bank(case.network, case.filter_bank) if args.with_filters else case.network
    orders = [int(h) for h in args.orders.split(",")]
    rep = harmonic_scan(net, case.sources, orders, solve_load_flow(net))
    verdicts = ieee519_check(rep)
    for bus, v in verdicts.items():
        print(f"{bus:<10} THD {v.thd_pct:8.3f}%  limit {v.limit_pct:g}%  {'PASS' if v.passed else 'FAIL'}")
    _write_csv(_out_dir(args.out) / "harmonics.csv", ("bus", "order", "vh_pct", "thd_pct"),
               [(b, h, f"{vh:.5f}", f"{t:.5f}") for b, h, vh, t in rep.rows()])
    return EXIT_OK if all(v.passed for v in verdicts.values()) else EXIT_NONCOMPLIANT


def cmd_stability(args) -> int:
    _spec, case = _load(args.case)
    m = loading_margin(case.network, step=args.step, refine_tolerance=args.tolerance, bus=args.bus,
                       v_stable=args.v_stable)
    print(f"bus {m.bus}: V_op = {m.v_operating:.5f} pu")
    print(f"loading margin: collapse at load x{m.collapse_scale:.4f} -> {m.loading_margin_percent:.3f}%"
          + (" (scale limit reached)" if m.reached_scale_limit else ""))
    print(f"literal (V_stable - V_op)/V_stable x 100 with V_stable = {m.v_stable:g}: "
          f"{m.literal_percent_b:.4f}%")
    print("the two figures measure different things and are reported side by side")
    _write_csv(_out_dir(args.out) / "nose_curve.csv", ("scale", "v_pu"),
               [(f"{s:.6f}", f"{v:.6f}") for s, v in m.nose_curve])
    return EXIT_OK


def cmd_train_svc(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    hyper = Hyperparameters(**data.pop("hyperparameters", {}))
    if args.episodes is not None:
        hyper = replace(hyper, episodes=args.episodes)
    if args.seed is not None:
        data["seed"] = args.seed
    agent, log = train_agent(EnvConfig.from_dict(data), hyper)
    agent.save(args.out)
    print(f"trained {hyper.episodes} episodes (seed {agent.config.seed}); "
          f"mean return first 50 {log.window_mean(True):.3f}, last 50 {log.window_mean(False):.3f}")
    if args.log:
        _write_csv(Path(args.log), ("episode", "return", "epsilon"),
                   [(k, f"{r:.6f}", f"{e:.6f}") for k, (r, e) in
                    enumerate(zip(log.episode_returns, log.epsilons))])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval_svc(args) -> int:
    agent = Agent.load(args.agent)
    trace = evaluate_episode(agent, agent.config, args.disturbance, steps=args.steps)
    _write_csv(Path(args.out), ("step", "voltage_pu", "action_mvar", "reward"),
               [(k, f"{v:.6f}", f"{a:.1f}", f"{r:.6f}") for k, v, a, r in trace.rows()])
    lo, hi = agent.config.band_low, agent.config.band_high
    outside = [k for k, v in enumerate(trace.voltage) if not lo <= v <= hi]
    print(f"{len(trace)} steps, total reward {sum(trace.reward):.3f}, "
          f"steps outside [{lo}, {hi}]: {outside or 'none'}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_study(args) -> int:
    _spec, case = _load(args.case)
    policy = case.policy
    if args.policy:
        merged = {**policy_to_dict(policy), **load_policy(args.policy)}
        policy = StudyPolicy.from_dict(merged)
    policy = policy.updated(pf_threshold=args.pf_threshold, q_override=args.q_override,
                            filters_enabled=False if args.no_filters else None)
    try:
        report = run_study(case, policy)
    except StudyError as exc:
        print(f"solver error in stage {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(summary_text(report), end="")
    if args.out:
        export_report(report, args.out)
    return EXIT_OK if report.passed else EXIT_NONCOMPLIANT


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="solargrid", description="PV plant grid-integration studies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sizing", help="plant sizing chain")
    p.add_argument("--params", help="JSON file overriding PlantParams fields")
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=cmd_sizing)

    p = sub.add_parser("loadflow", help="Newton-Raphson load flow")
    p.add_argument("case")
    p.add_argument("--out", default=".", help="directory for loadflow.csv")
    p.set_defaults(func=cmd_loadflow)

    p = sub.add_parser("compensate", help="size and apply an SVC")
    p.add_argument("case")
    p.add_argument("--bus", required=True)
    p.add_argument("--target-pf", type=float, default=0.95)
    p.add_argument("--meter", help="case meter to read PF from (default: a meter on --bus)")
    p.add_argument("--q-limit", type=float, default=6500.0)
    p.add_argument("--out", default="compensated_case.json")
    p.set_defaults(func=cmd_compensate)

    p = sub.add_parser("harmonics", help="harmonic scan and IEEE 519 check")
    p.add_argument("case")
    p.add_argument("--orders", default="5,7,11,13")
    p.add_argument("--with-filters", action="store_true", help="insert the case filter bank first")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_harmonics)

    p = sub.add_parser("stability", help="loading margin and literal %%B")
    p.add_argument("case")
    p.add_argument("--bus")
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--v-stable", type=float, default=1.0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("train-svc", help="train the SVC voltage agent")
    p.add_argument("--config", help="EnvConfig JSON; may carry a 'hyperparameters' object")
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", default="agent.json")
    p.add_argument("--log", help="optional per-episode CSV")
    p.set_defaults(func=cmd_train_svc)

    p = sub.add_parser("eval-svc", help="greedy rollout of a trained agent")
    p.add_argument("--agent", required=True)
    p.add_argument("--disturbance", default="none", help="e.g. step:-0.07@10")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_eval_svc)

    p = sub.add_parser("study", help="full compliance study")
    p.add_argument("case")
    p.add_argument("--pf-threshold", type=float)
    p.add_argument("--no-filters", action="store_true")
    p.add_argument("--q-override", type=float, metavar="MVAR")
    p.add_argument("--policy", help="study.json policy file; command-line flags win")
    p.add_argument("--out", help="directory for the report files")
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PowerFlowError, StudyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NetworkError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
