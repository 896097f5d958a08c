"""Brute-force reference optimum over every radial configuration."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

from .costs import dead_node_cost, line_switch_minutes
from .formulation import ObjectiveWeights
from .mcb import ClusterCache, SolverParams, configuration_cost
from .network import FaultScenario, Network
from .topology import Configuration, compute_off_outage, feeder_components, is_radial


class OracleRefused(ValueError):
    """Instance exceeds the enumeration caps."""


@dataclass
class OracleResult:
    restoration: float
    restoration_config: Configuration | None
    total: float
    total_config: Configuration | None
    radial: int
    feasible: int
    evaluated: dict[tuple[int, ...], tuple[float, float]] = field(default_factory=dict)
    wall_time: float = 0.0

    restores: bool = False

    @property
    def exists(self) -> bool:
        """Some feasible configuration energizes at least one off-outage node."""
        return self.restores


def enumerate_optimum(net: Network, fault: FaultScenario, params: SolverParams | None = None,
                      max_switchable: int = 12, max_breakers: int = 10,
                      full_objective: bool = True) -> OracleResult:
    """Exhaustive search over switch states with exact cluster subproblems.

    Returns the minimum restoration objective (reliability + switching) and,
    when ``full_objective`` is set, the minimum weighted objective including
    losses of every in-scope line.
    """
    params = params or SolverParams()
    t0 = time.perf_counter()
    area = compute_off_outage(net, fault)
    n_sw = len(area.switchable)
    n_brk = sum(1 for n in area.nodes if n in net.load_at and net.load_at[n].breaker)
    if n_sw > max_switchable:
        raise OracleRefused(f"{n_sw} switchable lines exceed the cap {max_switchable}")
    if n_brk > max_breakers:
        raise OracleRefused(f"{n_brk} breaker-equipped nodes exceed the cap {max_breakers}")
    steps = list(fault.steps(net))
    w: ObjectiveWeights = params.weights
    cache = ClusterCache()
    best_r, best_rc = math.inf, None
    best_t, best_tc = math.inf, None
    radial = feasible = 0
    evaluated = {}
    for bits in itertools.product((0, 1), repeat=n_sw):
        config = Configuration(tuple(zip(area.switchable, bits)))
        if not is_radial(area, config):
            continue
        radial += 1
        comps = feeder_components(area, config)
        clusters = [c for c in comps if c.nodes]
        res = [cache.solve(c, config, net, w, steps, "restoration", params.mip, params.ipm)
               for c in clusters]
        if not all(r.feasible for r in res):
            continue
        feasible += 1
        r_val = configuration_cost(area, config, res, w, steps)
        t_val = math.inf
        if full_objective:
            full = [cache.solve(c, config, net, w, steps, "total", params.mip, params.ipm)
                    for c in comps]
            if all(r.feasible for r in full):
                energized = [n for r in full for n in r.cluster.nodes]
                t_val = (math.fsum(r.total for r in full)
                         + dead_node_cost(area, energized, steps, w)
                         + w.w_sw * line_switch_minutes(area, config) / 60.0)
        evaluated[bits] = (r_val, t_val)
        if r_val < best_r:
            best_r, best_rc = r_val, config
        if t_val < best_t:
            best_t, best_tc = t_val, config
    restores = best_rc is not None and bool(is_radial(area, best_rc).energized)
    return OracleResult(best_r, best_rc, best_t, best_tc, radial, feasible, evaluated,
                        time.perf_counter() - t0, restores)
