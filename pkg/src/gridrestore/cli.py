"""Command-line front end: ``gridrestore solve|validate|enumerate``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import random
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conic import bnb
from .formulation import ObjectiveWeights
from .formulation.types import LEXICOGRAPHIC
from .iao import run_iao
from .mcb import NO_RESTORATION, SolverParams, run_mcb, traces_to_csv
from .network import FaultScenario, Network, NetworkError, load_network, load_scenario
from .oracle import OracleRefused, enumerate_optimum
from .plan import RestorationPlan
from .topology import NotRadialError, compute_off_outage
from .validation import MarginReport, PowerFlowError, validate_plan

logger = logging.getLogger("gridrestore")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_RESTORATION = 3
EXIT_NO_INCUMBENT = 4
EXIT_VIOLATIONS = 5

METHODS = ("mcb", "iao")


class InputError(Exception):
    """Bad command-line input or file."""


@dataclass
class RunConfig:
    method: str
    network: Path
    scenario: Path
    out_dir: Path
    params: SolverParams = field(default_factory=SolverParams)
    seed: int = 0
    parallel: int = 1
    dump_models: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        for p in (self.network, self.scenario):
            if not Path(p).is_file():
                raise InputError(f"no such file: {p}")


def _load(network: Path, scenario: Path) -> tuple[Network, FaultScenario]:
    for p in (network, scenario):
        if not Path(p).is_file():
            raise InputError(f"no such file: {p}")
    try:
        net = load_network(network)
        sc = load_scenario(scenario, net)
    except (NetworkError, json.JSONDecodeError, OSError) as exc:
        raise InputError(str(exc)) from exc
    return net, sc


def _write(path: Path, text: str) -> None:
    path.write_text(text if text.endswith("\n") else text + "\n")


def _empty_plan(method: str) -> RestorationPlan:
    return RestorationPlan(method, "no-outage", {}, [], {}, {}, [], {
        "F_re": 0.0, "F_sw": 0.0, "F_op": 0.0, "restoration": 0.0}, {})


def cmd_solve(cfg: RunConfig) -> int:
    """Solve, then write plan.json, margins.json, trace.csv and summary.json."""
    random.seed(cfg.seed)
    np.random.seed(cfg.seed)
    net, sc = _load(cfg.network, cfg.scenario)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = replace(cfg.params, parallel=cfg.parallel)
    t0 = time.perf_counter()
    area = compute_off_outage(net, sc)
    trace = "q,lb,ub,wall_ms\n"
    status = "no-outage"
    if area.empty:
        plan = _empty_plan(cfg.method)
        lb = ub = 0.0
    elif cfg.method == "mcb":
        res = run_mcb(net, sc, params)
        plan, status, lb, ub = res.plan, res.status, res.lb, res.ub
        trace = traces_to_csv(res.traces)
        if cfg.dump_models:
            from .mcb import new_master
            _write(out / "master.txt", new_master(area, params.weights).bundle.model.dump())
    else:
        res = run_iao(net, sc, params)
        plan, status = res.plan, res.status
        lb, ub = res.best_bound, res.objective
        if cfg.dump_models:
            from .formulation import build_integrated
            _write(out / "integrated.txt",
                   build_integrated(net, area, params.weights).model.dump())
    wall = time.perf_counter() - t0

    summary = {"method": cfg.method, "status": status, "lb": _num(lb), "ub": _num(ub),
               "wall_time_s": wall, "seed": cfg.seed}
    if plan is None:
        summary["message"] = "no incumbent"
        _write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
        _write(out / "trace.csv", trace)
        print(f"{cfg.method}: {status}, no incumbent", file=sys.stderr)
        if status in (NO_RESTORATION, "infeasible"):
            return EXIT_NO_RESTORATION
        return EXIT_NO_INCUMBENT
    plan.to_json(out / "plan.json")
    _write(out / "trace.csv", trace)
    report = validate_plan(net, sc, plan) if plan.steps else MarginReport()
    report.to_json(out / "margins.json")
    for key in ("F_re", "F_sw", "F_op"):
        summary[key] = plan.objective.get(key)
    summary["violations"] = len(report.violations)
    _write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
    print(f"{cfg.method} {status}: F_re={summary['F_re']:.6g} F_sw={summary['F_sw']:.6g} "
          f"F_op={summary['F_op']:.6g} wall={wall:.2f}s")
    print(plan.table())
    if status == NO_RESTORATION:
        return EXIT_NO_RESTORATION
    return EXIT_OK


def _num(v: float):
    v = float(v)
    return v if math.isfinite(v) else None


def cmd_validate(plan_path: Path, network: Path, scenario: Path,
                 out: Path | None = None) -> int:
    """Sweep a plan; exit 0 without violations, 5 with them."""
    net, sc = _load(network, scenario)
    if not Path(plan_path).is_file():
        raise InputError(f"no such file: {plan_path}")
    try:
        plan = RestorationPlan.load(plan_path)
        report = validate_plan(net, sc, plan)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed plan: {exc}") from exc
    except (ValueError, NotRadialError) as exc:
        raise InputError(str(exc)) from exc
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        report.to_json(out)
    print(report.table())
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def cmd_enumerate(network: Path, scenario: Path, params: SolverParams,
                  max_switchable: int = 12, max_breakers: int = 10) -> int:
    """Brute-force optimum; prints a JSON summary."""
    net, sc = _load(network, scenario)
    area = compute_off_outage(net, sc)
    if area.empty:
        print(json.dumps({"status": "no-outage"}))
        return EXIT_OK
    try:
        res = enumerate_optimum(net, sc, params, max_switchable, max_breakers)
    except OracleRefused as exc:
        raise InputError(str(exc)) from exc
    doc = {"radial": res.radial, "feasible": res.feasible,
           "restoration": _num(res.restoration), "total": _num(res.total),
           "restoration_config": res.restoration_config.as_dict() if res.restoration_config else None,
           "total_config": res.total_config.as_dict() if res.total_config else None}
    if not res.exists:
        doc["status"] = "no restoration exists"
        print(json.dumps(doc, indent=1, sort_keys=True))
        return EXIT_NO_RESTORATION
    doc["status"] = "optimal"
    print(json.dumps(doc, indent=1, sort_keys=True))
    return EXIT_OK


def _params(args) -> SolverParams:
    try:
        weights = ObjectiveWeights.parse(args.weights) if args.weights else ObjectiveWeights()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if getattr(args, "lexicographic", False):
        weights = replace(weights, mode=LEXICOGRAPHIC)
    mip = bnb.MipSettings(time_limit=args.time_limit_s)
    try:
        return SolverParams(eps_opt=args.eps_opt, eps_time=args.time_limit_s, weights=weights,
                            parallel=getattr(args, "parallel", 1), mip=mip)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridrestore",
                                 description="Distribution service restoration planner")
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--eps-opt", type=float, default=0.01, help="UB-LB stopping gap")
        p.add_argument("--time-limit-s", type=float, default=120.0)
        p.add_argument("--weights", help="w_re,w_sw,w_op (default 1e4,1e2,1)")

    s = sub.add_parser("solve", help="compute a restoration plan")
    s.add_argument("network", type=Path)
    s.add_argument("scenario", type=Path)
    s.add_argument("-o", "--out-dir", type=Path, default=Path("out"))
    s.add_argument("--method", choices=METHODS, default="mcb")
    solver_flags(s)
    s.add_argument("--lexicographic", action="store_true")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dump-models", action="store_true")

    v = sub.add_parser("validate", help="AC power-flow check of a plan")
    v.add_argument("plan", type=Path)
    v.add_argument("network", type=Path)
    v.add_argument("scenario", type=Path)
    v.add_argument("-o", "--out", type=Path, default=None, help="margins.json path")

    e = sub.add_parser("enumerate", help="brute-force reference optimum")
    e.add_argument("network", type=Path)
    e.add_argument("scenario", type=Path)
    e.add_argument("--max-switchable", type=int, default=12)
    e.add_argument("--max-breakers", type=int, default=10)
    solver_flags(e)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("GRIDRESTORE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            cfg = RunConfig(args.method, args.network, args.scenario, args.out_dir,
                            _params(args), args.seed, args.parallel, args.dump_models)
            return cmd_solve(cfg)
        if args.command == "validate":
            return cmd_validate(args.plan, args.network, args.scenario, args.out)
        return cmd_enumerate(args.network, args.scenario, _params(args),
                             args.max_switchable, args.max_breakers)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PowerFlowError as exc:
        print(f"power flow failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS


if __name__ == "__main__":
    sys.exit(main())
