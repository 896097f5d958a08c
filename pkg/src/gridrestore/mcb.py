"""Combinatorial Benders decomposition: master over switch states, cluster subproblems."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conic import bnb, ipm
from .conic.bnb import RelaxationError
from .costs import dead_node_cost, line_switch_minutes, node_costs, restoration_value
from .formulation import (EXACT, FEASIBILITY, OPTIMALITY, CutRecord, ModelBundle, ObjectiveWeights,
                          build_master, build_subproblem, encode_cut, fix_binaries_and_minimize,
                          solve_bundle)
from .formulation.types import LEXICOGRAPHIC, BigMPolicy, DistFlowRelaxation, value
from .network import FaultScenario, Network
from .plan import RestorationPlan, order_actions, switching_minutes, network_op_time
from .topology import (Cluster, Configuration, OffOutageArea, compute_off_outage,
                       feeder_components, is_radial)

logger = logging.getLogger(__name__)

CONVERGED = "converged"
TIME_LIMIT = "time-limit"
ITERATION_LIMIT = "iteration-limit"
NO_RESTORATION = "no-restoration"
NO_SOLUTION = "no-solution"


@dataclass
class SolverParams:
    eps_opt: float = 0.01
    eps_time: float = 120.0
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    parallel: int = 1
    max_iterations: int = 500
    cut_style: str = EXACT
    # add the linear no-good form next to each disjunctive cut
    strengthen_cuts: bool = True
    mip: bnb.MipSettings = field(default_factory=bnb.MipSettings)
    ipm: ipm.IPMSettings = field(default_factory=ipm.IPMSettings)

    def __post_init__(self):
        if not self.eps_opt > 0 or not self.eps_time > 0:
            raise ValueError("eps_opt and eps_time must be positive")
        if self.parallel < 1 or self.max_iterations < 1:
            raise ValueError("parallel and max_iterations must be at least 1")


@dataclass
class ClusterResult:
    cluster: Cluster
    status: str
    restoration: float = math.inf
    total: float = math.inf
    ens: float = math.inf
    breaker_minutes: float = math.inf
    losses: float = math.inf
    pickup: dict[str, list[int]] = field(default_factory=dict)
    dg: dict[str, list[list[float]]] = field(default_factory=dict)
    message: str = ""
    wall_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


@dataclass
class IterationTrace:
    q: int
    lb_q: float
    ub_q: float
    lb: float
    ub: float
    cluster_objectives: list[float]
    clusters_feasible: bool
    wall_ms: float
    config: tuple[int, ...] = ()
    radial: bool = True

    CSV_FIELDS = ("q", "lb", "ub", "wall_ms", "clusters_feasible", "lb_q", "ub_q")

    def row(self) -> list:
        return [self.q, repr(float(self.lb)), repr(float(self.ub)), f"{self.wall_ms:.3f}",
                int(self.clusters_feasible), repr(float(self.lb_q)), repr(float(self.ub_q))]


def traces_to_csv(traces: Sequence[IterationTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(IterationTrace.CSV_FIELDS)
    for tr in traces:
        w.writerow(tr.row())
    return buf.getvalue()


@dataclass
class McbResult:
    status: str
    plan: RestorationPlan | None
    traces: list[IterationTrace]
    lb: float
    ub: float
    cuts: list[CutRecord]
    configs: list[Configuration]
    area: OffOutageArea
    wall_time: float

    @property
    def gap(self) -> float:
        return self.ub - self.lb


# -- clusters ----------------------------------------------------------------

def solve_cluster(cluster: Cluster, config: Configuration, net: Network,
                  weights: ObjectiveWeights, steps: Sequence[int], objective: str = "restoration",
                  mip: bnb.MipSettings | None = None,
                  ipm_settings: ipm.IPMSettings | None = None) -> ClusterResult:
    """Optimal pickup of one cluster.

    ``objective="restoration"`` minimises reliability and breaker terms and
    then, with pickup fixed, the losses; ``"total"`` minimises the weighted sum.
    """
    t0 = time.perf_counter()
    try:
        b = build_subproblem(cluster, config, net, weights, steps)
        sol = solve_bundle(b, weights, mip, ipm_settings, objective=objective)
    except RelaxationError as exc:
        return ClusterResult(cluster, "error", message=str(exc),
                             wall_time=time.perf_counter() - t0)
    if not sol.ok:
        status = "infeasible" if sol.status == "infeasible" else sol.status
        return ClusterResult(cluster, status, wall_time=time.perf_counter() - t0)
    x = sol.x
    if objective == "restoration":
        r = fix_binaries_and_minimize(b, x, b.terms.op, ipm_settings)
        if r.ok:
            x = r.x
    pickup = {n: [int(round(value(b.atlas.alpha[(n, t)], x))) for t in steps]
              for n in cluster.nodes if net.load_at.get(n) is not None}
    ens, brk = node_costs(net, cluster.nodes, pickup, cluster.nodes, steps)
    rest = restoration_value(ens, brk, weights)
    losses = max(0.0, b.terms.op.value(x))
    dg = {}
    for n in cluster.component:
        for g in net.dgs_at.get(n, ()):
            dg[g.id] = [[value(b.atlas.P_inj[(g.id, t)], x), value(b.atlas.Q_inj[(g.id, t)], x)]
                        for t in steps]
    return ClusterResult(cluster, "optimal", rest, rest + weights.w_op * losses, ens, brk,
                         losses, pickup, dg, wall_time=time.perf_counter() - t0)


class ClusterCache:
    """Memo of cluster solutions keyed by component, closed lines and objective."""

    def __init__(self):
        self._store: dict[tuple, ClusterResult] = {}
        self.hits = 0

    def solve(self, cluster, config, net, weights, steps, objective, mip, ipm_settings):
        key = (cluster.key(), cluster.nodes, objective, tuple(steps))
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            return ClusterResult(cluster, hit.status, hit.restoration, hit.total, hit.ens,
                                 hit.breaker_minutes, hit.losses, hit.pickup, hit.dg,
                                 hit.message, 0.0)
        res = solve_cluster(cluster, config, net, weights, steps, objective, mip, ipm_settings)
        if res.status in ("optimal", "infeasible"):
            self._store[key] = res
        return res


# -- iteration steps ----------------------------------------------------------

@dataclass
class MasterState:
    area: OffOutageArea
    bundle: ModelBundle
    policy: BigMPolicy
    relax: DistFlowRelaxation
    cut_pool: list[CutRecord] = field(default_factory=list)


def new_master(area: OffOutageArea, weights: ObjectiveWeights) -> MasterState:
    net = area.net
    relax = DistFlowRelaxation.derive(net, area)
    policy = BigMPolicy.derive(net, area, relax.u_max)
    bundle = build_master(net, area, weights, policy, (), relax)
    return MasterState(area, bundle, policy, relax)


def step_master(state: MasterState, q: int, params: SolverParams,
                time_limit: float = math.inf, cutoff: float = math.inf):
    """Solve the master; returns (configuration or None, LB^(q), solution).

    With a finite ``cutoff`` only configurations whose master value is below
    it are sought; status ``"cutoff"`` then certifies LB >= cutoff.
    """
    mip = bnb.MipSettings(params.mip.mip_gap_tol, params.mip.int_tol, params.mip.prune_tol,
                          params.mip.node_limit, min(params.mip.time_limit, time_limit))
    sol = solve_bundle(state.bundle, params.weights, mip, params.ipm, objective="restoration",
                       cutoff=cutoff)
    if not sol.ok:
        return None, sol.best_bound, sol
    atlas = state.bundle.atlas
    config = Configuration.of(state.area, {l: value(atlas.mu[l], sol.x)
                                           for l in state.area.switchable})
    if sol.status == "optimal":
        # the master objective depends on binaries only: evaluate it exactly
        lb_q = master_value(state, config, sol.x, params.weights)
    else:
        lb_q = float(sol.best_bound)
    logger.info("master q=%d lb_q=%.10g nodes=%d", q, lb_q, sol.nodes)
    return config, lb_q, sol


def master_value(state: MasterState, config: Configuration, x: np.ndarray,
                 weights: ObjectiveWeights) -> float:
    area = state.area
    atlas = state.bundle.atlas
    steps = state.bundle.steps
    energized = [n for n in area.nodes if value(atlas.phi[n], x) > 0.5]
    pickup = {n: [int(round(value(atlas.alpha[(n, t)], x))) for t in steps]
              for n in area.nodes if area.net.load_at.get(n) is not None}
    ens, brk = node_costs(area.net, area.nodes, pickup, energized, steps)
    return restoration_value(ens, line_switch_minutes(area, config) + brk, weights)


def configuration_cost(area: OffOutageArea, config: Configuration, results: Sequence[ClusterResult],
                       weights: ObjectiveWeights, steps: Sequence[int]) -> float:
    """UB^(q): cluster optima plus unserved dead nodes plus line switching."""
    energized = [n for r in results for n in r.cluster.nodes]
    return (math.fsum(r.restoration for r in results)
            + dead_node_cost(area, energized, steps, weights)
            + weights.w_sw * line_switch_minutes(area, config) / 60.0)


def step_subproblems(area: OffOutageArea, config: Configuration, clusters: Sequence[Cluster],
                     params: SolverParams, cache: ClusterCache | None = None,
                     objective: str = "restoration"):
    """Solve every cluster (optionally in parallel); returns (results, UB^(q))."""
    cache = cache or ClusterCache()
    net = area.net
    steps = list(area.fault.steps(net))

    def work(c):
        return cache.solve(c, config, net, params.weights, steps, objective, params.mip,
                           params.ipm)

    if params.parallel > 1 and len(clusters) > 1:
        with ThreadPoolExecutor(max_workers=params.parallel) as ex:
            results = list(ex.map(work, clusters))
    else:
        results = [work(c) for c in clusters]
    if all(r.feasible for r in results):
        ub = configuration_cost(area, config, results, params.weights, steps)
    else:
        ub = math.inf
    return results, ub


def generate_optimality_cut(cluster: Cluster, config: Configuration, bound: float,
                            iteration: int, style: str = EXACT) -> CutRecord:
    return CutRecord.of(OPTIMALITY, cluster, config, iteration, bound, style)


def generate_feasibility_cut(cluster: Cluster, config: Configuration, iteration: int,
                             style: str = EXACT) -> CutRecord:
    return CutRecord.of(FEASIBILITY, cluster, config, iteration, None, style)


# -- driver -------------------------------------------------------------------

def run_mcb(net: Network, fault: FaultScenario, params: SolverParams | None = None) -> McbResult:
    """Iterate master and cluster subproblems until UB - LB <= eps_opt or a limit fires."""
    params = params or SolverParams()
    t_start = time.perf_counter()
    area = compute_off_outage(net, fault)
    if area.empty:
        raise ValueError("fault leaves no off-outage area")
    steps = list(fault.steps(net))
    state = new_master(area, params.weights)
    cache = ClusterCache()
    lb, ub = 0.0, math.inf
    best: tuple[Configuration, list[ClusterResult]] | None = None
    traces: list[IterationTrace] = []
    configs: list[Configuration] = []
    status = ITERATION_LIMIT
    for q in range(1, params.max_iterations + 1):
        remaining = params.eps_time - (time.perf_counter() - t_start)
        if remaining <= 0:
            status = TIME_LIMIT
            break
        cutoff = ub - params.eps_opt if params.weights.mode != LEXICOGRAPHIC else math.inf
        config, lb_q, msol = step_master(state, q, params, remaining, cutoff)
        if config is None:
            if msol.status == "cutoff":
                # no configuration can beat the incumbent by more than eps_opt
                lb = max(lb, cutoff)
                traces.append(IterationTrace(q, cutoff, math.inf, lb, ub, [], True,
                                             (time.perf_counter() - t_start) * 1e3))
                status = CONVERGED
            elif msol.status == "infeasible":
                if q == 1:
                    status = NO_RESTORATION
                else:
                    # every remaining configuration has been cut off
                    lb = ub
                    status = CONVERGED if best is not None else NO_RESTORATION
            else:
                status = TIME_LIMIT
            break
        lb = max(lb, lb_q)
        configs.append(config)
        chk = is_radial(area, config)
        comps = feeder_components(area, config)
        clusters = [c for c in comps if c.nodes]
        results, ub_q = step_subproblems(area, config, clusters, params, cache)
        if ub_q < ub:
            ub = ub_q
            best = (config, results)
        for r in results:
            if r.feasible:
                if r.restoration > 0:
                    cut = generate_optimality_cut(r.cluster, config, r.restoration, q,
                                                  params.cut_style)
                else:
                    continue
            elif r.status == "infeasible":
                cut = generate_feasibility_cut(r.cluster, config, q, params.cut_style)
            else:
                logger.warning("cluster %d failed (%s); no cut", r.cluster.index, r.status)
                continue
            encode_cut(state.bundle, cut, state.policy, params.strengthen_cuts)
            state.cut_pool.append(cut)
        wall = (time.perf_counter() - t_start) * 1e3
        traces.append(IterationTrace(q, lb_q, ub_q, lb, ub,
                                     [r.restoration for r in results],
                                     all(r.feasible for r in results), wall, config.key(),
                                     chk.ok))
        logger.info("q=%d LB=%.10g UB=%.10g", q, lb, ub)
        if ub - lb <= params.eps_opt:
            status = CONVERGED
            break
        if time.perf_counter() - t_start > params.eps_time:
            status = TIME_LIMIT
            break
    wall = time.perf_counter() - t_start
    plan = None
    if best is not None:
        plan = build_plan(area, best[0], best[1], params, "mcb",
                          {"lb": float(lb), "ub": float(ub), "gap": float(ub - lb),
                           "iterations": len(traces), "status": status})
        if status == CONVERGED and not is_radial(area, best[0]).energized:
            status = plan.status = plan.info["status"] = NO_RESTORATION
    elif status == CONVERGED:
        status = NO_RESTORATION
    if plan is None and status in (TIME_LIMIT, ITERATION_LIMIT):
        status = NO_SOLUTION if status == TIME_LIMIT else status
    return McbResult(status, plan, traces, lb, ub, list(state.cut_pool), configs, area, wall)


def build_plan(area: OffOutageArea, config: Configuration, results: Sequence[ClusterResult],
               params: SolverParams, method: str, info: dict) -> RestorationPlan:
    net = area.net
    steps = list(area.fault.steps(net))
    pickup: dict[str, list[int]] = {n: [0] * len(steps) for n in area.nodes
                                    if net.load_at.get(n) is not None}
    dg: dict[str, list[list[float]]] = {}
    for r in results:
        pickup.update(r.pickup)
        dg.update(r.dg)
    for n in area.nodes:
        for g in net.dgs_at.get(n, ()):
            dg.setdefault(g.id, [[0.0, 0.0] for _ in steps])
    acts = order_actions(area, config, pickup, steps)
    energized = [n for r in results for n in r.cluster.nodes]
    ens, brk = node_costs(net, area.nodes, pickup, energized, steps)
    sw = line_switch_minutes(area, config) + brk
    losses = math.fsum(r.losses for r in results)
    w = params.weights
    objective = {"F_re": ens, "F_sw": sw, "F_op": losses,
                 "restoration": restoration_value(ens, sw, w),
                 "F_sw_actions": switching_minutes(acts, network_op_time(net))}
    return RestorationPlan(method, info.get("status", ""), config.as_dict(), acts, pickup, dg,
                           steps, objective, info)
