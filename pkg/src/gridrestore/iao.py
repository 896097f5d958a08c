"""Integrated model solved directly by branch-and-bound."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .conic import bnb
from .costs import line_switch_minutes, node_costs, restoration_value
from .formulation import build_integrated, solve_bundle
from .formulation.types import value
from .mcb import NO_RESTORATION, SolverParams
from .network import FaultScenario, Network
from .plan import RestorationPlan, network_op_time, order_actions, switching_minutes
from .topology import Configuration, OffOutageArea, compute_off_outage


@dataclass
class IaoResult:
    status: str
    plan: RestorationPlan | None
    objective: float
    best_bound: float
    nodes: int
    wall_time: float
    area: OffOutageArea
    config: Configuration | None = None

    @property
    def gap(self) -> float:
        return self.objective - self.best_bound


def run_iao(net: Network, fault: FaultScenario, params: SolverParams | None = None) -> IaoResult:
    """Solve the integrated mixed-integer conic model (incumbent, best bound, gap)."""
    params = params or SolverParams()
    t0 = time.perf_counter()
    area = compute_off_outage(net, fault)
    if area.empty:
        raise ValueError("fault leaves no off-outage area")
    bundle = build_integrated(net, area, params.weights)
    mip = bnb.MipSettings(params.mip.mip_gap_tol, params.mip.int_tol, params.mip.prune_tol,
                          params.mip.node_limit, min(params.mip.time_limit, params.eps_time))
    sol = solve_bundle(bundle, params.weights, mip, params.ipm, objective="total")
    wall = time.perf_counter() - t0
    if not sol.ok:
        return IaoResult(sol.status, None, math.inf, sol.best_bound, sol.nodes, wall, area)
    x = sol.x
    status = sol.status
    atlas = bundle.atlas
    steps = list(bundle.steps)
    config = Configuration.of(area, {l: value(atlas.mu[l], x) for l in area.switchable})
    energized = [n for n in area.nodes if value(atlas.phi[n], x) > 0.5]
    pickup = {n: [int(round(value(atlas.alpha[(n, t)], x))) for t in steps]
              for n in area.nodes if net.load_at.get(n) is not None}
    dg = {}
    for n in bundle.scope.nodes:
        for g in net.dgs_at.get(n, ()):
            dg[g.id] = [[float(value(atlas.P_inj[(g.id, t)], x)),
                         float(value(atlas.Q_inj[(g.id, t)], x))]
                        for t in steps]
    ens, brk = node_costs(net, area.nodes, pickup, energized, steps)
    sw = line_switch_minutes(area, config) + brk
    losses = max(0.0, float(bundle.terms.op.value(x)))
    w = params.weights
    rest = restoration_value(ens, sw, w)
    if status == "optimal" and not energized:
        status = NO_RESTORATION
    acts = order_actions(area, config, pickup, steps)
    objective = {"F_re": ens, "F_sw": sw, "F_op": losses, "restoration": rest,
                 "total": rest + w.w_op * losses,
                 "F_sw_actions": switching_minutes(acts, network_op_time(net))}
    info = {"best_bound": float(sol.best_bound), "incumbent": float(sol.objective),
            "gap": float(sol.objective - sol.best_bound), "nodes": sol.nodes,
            "status": status}
    plan = RestorationPlan("iao", status, config.as_dict(), acts, pickup, dg, steps,
                           objective, info)
    return IaoResult(status, plan, sol.objective, sol.best_bound, sol.nodes, wall, area,
                     config)
