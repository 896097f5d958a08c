"""Assembly of the integrated, master and cluster models."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..conic import bnb, ipm
from ..conic.model import ConicModel, LinExpr
from ..network import Network
from ..topology import Cluster, Configuration, OffOutageArea
from .encoders import (ObjectiveTerms, PowerFlowScope, build_objective, encode_distflow,
                       encode_links, encode_load_pickup, encode_radiality,
                       encode_socp_powerflow, node_restoration_terms, orientation)
from .types import (LEXICOGRAPHIC, BigMPolicy, DistFlowRelaxation, ObjectiveWeights,
                    VariableAtlas)

logger = logging.getLogger(__name__)


@dataclass
class ModelBundle:
    """A model with the bookkeeping needed to read its solutions."""

    model: ConicModel
    atlas: VariableAtlas
    terms: ObjectiveTerms
    steps: tuple[int, ...]
    scope: PowerFlowScope
    kind: str
    nodes: tuple[str, ...] = ()
    net: Network | None = None
    cuts: list = field(default_factory=list)


def _topology_vars(model: ConicModel, atlas: VariableAtlas, net: Network, area: OffOutageArea):
    for n in area.nodes:
        atlas.phi[n] = model.add_binary(f"phi[{n}]")
    for n in area.scope_nodes:
        atlas.phi[n] = 1.0
    for l in area.switchable:
        atlas.mu[l] = model.add_binary(f"mu[{l}]")
    for l in area.fixed:
        ln = net.line_by_id[l]
        # a line without switch is live exactly when its ends are
        atlas.mu[l] = atlas.phi[ln.i]
        model.add_row(atlas.phi[ln.i] == atlas.phi[ln.j], f"samezone[{l}]")
    for l in area.scope_lines:
        atlas.mu[l] = 1.0


def _steps(area: OffOutageArea, steps: Sequence[int] | None) -> tuple[int, ...]:
    return tuple(steps) if steps is not None else tuple(area.fault.steps(area.net))


def build_integrated(net: Network, area: OffOutageArea, weights: ObjectiveWeights,
                     policy: BigMPolicy | None = None,
                     steps: Sequence[int] | None = None) -> ModelBundle:
    """Mixed-integer conic model of the whole restoration problem."""
    if area.empty:
        raise ValueError("off-outage area is empty")
    policy = policy or BigMPolicy.derive(net, area)
    policy.check(net, area)
    steps = _steps(area, steps)
    model = ConicModel(name="integrated")
    atlas = VariableAtlas()
    scope = PowerFlowScope.of_area(net, area)
    _topology_vars(model, atlas, net, area)
    encode_radiality(model, atlas, area, policy)
    encode_load_pickup(model, atlas, area, steps)
    for t in steps:
        encode_socp_powerflow(model, atlas, net, scope, policy, t)
        encode_links(model, atlas, net, scope, policy, t)
    terms = build_objective(atlas, weights, area, steps, scope.lines)
    model.minimize(terms.total)
    return ModelBundle(model, atlas, terms, steps, scope, "integrated", area.nodes, net)


def build_master(net: Network, area: OffOutageArea, weights: ObjectiveWeights,
                 policy: BigMPolicy | None = None, cut_pool: Sequence = (),
                 relax: DistFlowRelaxation | None = None,
                 steps: Sequence[int] | None = None) -> ModelBundle:
    """Integrated model with lossless linear power flow, no loss term, plus cuts."""
    from .cuts import encode_cut

    if area.empty:
        raise ValueError("off-outage area is empty")
    relax = relax or DistFlowRelaxation.derive(net, area)
    relax.check(net)
    policy = policy or BigMPolicy.derive(net, area, relax.u_max)
    steps = _steps(area, steps)
    model = ConicModel(name="master")
    atlas = VariableAtlas()
    scope = PowerFlowScope.of_area(net, area)
    _topology_vars(model, atlas, net, area)
    encode_radiality(model, atlas, area, policy)
    encode_load_pickup(model, atlas, area, steps)
    for t in steps:
        encode_distflow(model, atlas, net, scope, relax, t)
    terms = build_objective(atlas, weights, area, steps, ())
    model.minimize(terms.restoration)
    bundle = ModelBundle(model, atlas, terms, steps, scope, "master", area.nodes, net)
    for cut in cut_pool:
        encode_cut(bundle, cut, policy)
    return bundle


def build_subproblem(cluster: Cluster, config: Configuration, net: Network,
                     weights: ObjectiveWeights, steps: Sequence[int]) -> ModelBundle:
    """Pickup and AC power flow of one cluster with the configuration fixed.

    Objective: reliability and breaker terms of the cluster's off-outage nodes
    (``terms.restoration``) plus losses on its closed lines (``terms.op``).
    """
    status = config.as_dict()
    for l in cluster.closed:
        if l in status and not status[l]:
            raise ValueError(f"cluster line {l} is open in the configuration")
    for l in cluster.sources:
        if not status.get(l, 0):
            raise ValueError(f"source line {l} is open in the configuration")
    steps = tuple(steps)
    model = ConicModel(name=f"cluster{cluster.index}")
    atlas = VariableAtlas()
    X = set(cluster.nodes)
    for n in cluster.component:
        atlas.phi[n] = 1.0
    for l in cluster.closed:
        atlas.mu[l] = 1.0
    for n in cluster.component:
        ld = net.load_at.get(n)
        prev = None
        for t in steps:
            if n in X and ld is not None and ld.breaker:
                a = model.add_binary(f"alpha[{n},{t}]")
                if prev is not None:
                    model.add_row(prev <= a, f"monotone[{n},{t}]")
                prev = a
                atlas.alpha[(n, t)] = a
            else:
                atlas.alpha[(n, t)] = 1.0
    scope = PowerFlowScope(cluster.component, cluster.closed, orientation(net), frozenset())
    for t in steps:
        encode_socp_powerflow(model, atlas, net, scope, None, t)
    ens, brk = node_restoration_terms(atlas, net, cluster.nodes, steps)
    op = LinExpr()
    for l in cluster.closed:
        r = net.line_by_id[l].r
        if r > 0:
            for t in steps:
                op += atlas.F[(l, t)] * (r * net.dt)
    terms = ObjectiveTerms(ens, brk, op, weights)
    model.minimize(terms.total)
    return ModelBundle(model, atlas, terms, steps, scope, "subproblem", cluster.nodes, net)


# -- solving -----------------------------------------------------------------

@dataclass
class BundleSolution:
    status: str
    x: np.ndarray | None
    objective: float
    restoration: float = math.inf
    re: float = math.inf
    sw: float = math.inf
    op: float = math.inf
    best_bound: float = -math.inf
    nodes: int = 0
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.x is not None


def _summarize(bundle: ModelBundle, res: bnb.MipResult, objective: float | None = None) -> BundleSolution:
    if res.x is None:
        return BundleSolution(res.status, None, math.inf, best_bound=res.best_bound,
                              nodes=res.nodes, wall_time=res.wall_time)
    t = bundle.terms
    x = res.x
    re, sw, op = t.re.value(x), t.sw.value(x), t.op.value(x)
    return BundleSolution(res.status, x, res.objective if objective is None else objective,
                          t.restoration.value(x), re, sw, op, res.best_bound, res.nodes,
                          res.wall_time)


def solve_bundle(bundle: ModelBundle, weights: ObjectiveWeights,
                 mip: bnb.MipSettings | None = None,
                 ipm_settings: ipm.IPMSettings | None = None,
                 objective: str = "total", cutoff: float = math.inf) -> BundleSolution:
    """Solve with the weighted objective or, in lexicographic mode, by stages.

    ``objective`` picks ``total`` (restoration + losses) or ``restoration``.
    ``cutoff`` (weighted mode only) discards solutions not below it.
    Lexicographic stages are reliability, then switching, then losses, each
    later stage keeping earlier optima through an epsilon-constraint row.
    """
    model = bundle.model
    t = bundle.terms
    if weights.mode != LEXICOGRAPHIC:
        model.minimize(t.total if objective == "total" else t.restoration)
        return _summarize(bundle, bnb.solve_mip(model, mip, ipm_settings, cutoff=cutoff))
    stages = [t.re, t.sw] + ([t.op] if objective == "total" else [])
    work = model.copy()
    nodes, wall = 0, 0.0
    res = None
    for k, expr in enumerate(stages):
        work.minimize(expr)
        res = bnb.solve_mip(work, mip, ipm_settings)
        nodes += res.nodes
        wall += res.wall_time
        if res.x is None:
            out = _summarize(bundle, res)
            out.nodes, out.wall_time = nodes, wall
            return out
        best = expr.value(res.x)
        work.add_row(expr <= best + 1e-7 * (1.0 + abs(best)), f"lex[{k}]")
    out = _summarize(bundle, res)
    out.objective = (t.total if objective == "total" else t.restoration).value(res.x)
    out.nodes, out.wall_time = nodes, wall
    return out


def fix_binaries_and_minimize(bundle: ModelBundle, x: np.ndarray, expr: LinExpr,
                              ipm_settings: ipm.IPMSettings | None = None) -> ipm.SolveResult:
    """Continuous re-solve with every binary fixed at its value in ``x``."""
    model = bundle.model
    lb, ub = model.bounds()
    b = np.array(model.binaries(), dtype=int)
    if b.size:
        lb[b] = ub[b] = np.round(x[b])
    saved = model.objective
    model.minimize(expr)
    try:
        return ipm.solve_continuous(model, ipm_settings, lb, ub)
    finally:
        model.minimize(saved)
