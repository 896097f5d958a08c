"""Row and cone encoders for the restoration models.

Line flows ``p``, ``q`` are oriented along the pre-fault parent -> child
direction (ties keep their file orientation) and may take either sign; the
branch-flow equations are exact for either sign because ``F`` is the squared
current and the voltage of the reference ("from") end closes the cone.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..conic.model import ConicModel, Constraint, LinExpr, Var, quicksum
from ..network import Network
from ..topology import OffOutageArea
from .types import BigMPolicy, DistFlowRelaxation, Expr, ObjectiveWeights, VariableAtlas


def orientation(net: Network) -> dict[str, tuple[str, str]]:
    """(from, to) of every line: parent -> child in the pre-fault forest."""
    out: dict[str, tuple[str, str]] = {}
    seen = set()
    for s in net.node_ids:
        if s not in net.substations:
            continue
        seen.add(s)
        todo = deque([s])
        while todo:
            a = todo.popleft()
            for ln in net.incident[a]:
                if not ln.base_closed or ln.id in out:
                    continue
                b = ln.other(a)
                out[ln.id] = (a, b)
                if b not in seen:
                    seen.add(b)
                    todo.append(b)
    for ln in net.lines:
        out.setdefault(ln.id, (ln.i, ln.j))
    return out


def is_const(e: Expr) -> bool:
    return not isinstance(e, Var) and not (isinstance(e, LinExpr) and e.terms)


def const_value(e: Expr) -> float:
    return e.const if isinstance(e, LinExpr) else float(e)


@dataclass(frozen=True)
class PowerFlowScope:
    """Nodes and lines whose power flow a model carries.

    ``switched`` lines have a binary status; their voltage rows are relaxed
    with big-M. Other lines take their status from ``atlas.mu`` (a constant
    or an energization expression) and keep exact voltage rows.
    """

    nodes: tuple[str, ...]
    lines: tuple[str, ...]
    orient: dict[str, tuple[str, str]]
    switched: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def of_area(cls, net: Network, area: OffOutageArea) -> "PowerFlowScope":
        nodes = set(area.nodes) | set(area.scope_nodes)
        lines = set(area.lines) | set(area.scope_lines)
        return cls(tuple(n for n in net.node_ids if n in nodes),
                   tuple(ln.id for ln in net.lines if ln.id in lines),
                   orientation(net), frozenset(area.switchable))


# -- objective ---------------------------------------------------------------

@dataclass
class ObjectiveTerms:
    re: LinExpr       # energy not supplied weighted by importance (p.u. h)
    sw: LinExpr       # switching time (minutes)
    op: LinExpr       # energy losses (p.u. h)
    weights: ObjectiveWeights

    @property
    def restoration(self) -> LinExpr:
        w = self.weights
        return self.re * w.w_re + self.sw * (w.w_sw / 60.0)

    @property
    def total(self) -> LinExpr:
        return self.restoration + self.op * self.weights.w_op


def node_restoration_terms(atlas: VariableAtlas, net: Network, nodes: Iterable[str],
                           steps: Sequence[int]) -> tuple[LinExpr, LinExpr]:
    """(energy not supplied, breaker minutes) contributed by ``nodes``.

    A breaker is operated once when an energized node has its load rejected
    at the first step (opened, later possibly reclosed).
    """
    dt = net.dt
    ens, brk = LinExpr(), LinExpr()
    t0 = steps[0]
    for n in nodes:
        ld = net.load_at.get(n)
        if ld is None:
            continue
        for t in steps:
            if ld.p[t] > 0:
                ens += (1 - atlas.alpha[(n, t)]) * (ld.importance * ld.p[t] * dt)
        if ld.breaker:
            brk += (atlas.phi[n] - atlas.alpha[(n, t0)]) * ld.breaker_time_min
    return ens, brk


def line_switching_minutes(atlas: VariableAtlas, net: Network, lines: Iterable[str]) -> LinExpr:
    out = LinExpr()
    for l in lines:
        ln = net.line_by_id[l]
        lam = ln.switch.op_time_min
        if ln.is_tie:
            out += atlas.mu[l] * lam
        else:
            out += (1 - atlas.mu[l]) * lam
    return out


def build_objective(atlas: VariableAtlas, weights: ObjectiveWeights, area: OffOutageArea,
                    steps: Sequence[int], lines: Iterable[str] = ()) -> ObjectiveTerms:
    """Weighted objective pieces; ``lines`` are the lines whose losses count."""
    net = area.net
    for n in area.nodes:
        ld = net.load_at.get(n)
        if ld is not None and any(t >= len(ld.p) for t in steps):
            raise ValueError(f"missing profile entry for node {n}")
    ens, brk = node_restoration_terms(atlas, net, area.nodes, steps)
    sw = line_switching_minutes(atlas, net, area.switchable) + brk
    op = LinExpr()
    for l in lines:
        r = net.line_by_id[l].r
        for t in steps:
            if (l, t) in atlas.F and r > 0:
                op += atlas.F[(l, t)] * (r * net.dt)
    return ObjectiveTerms(ens, sw, op, weights)


# -- radiality and pickup ----------------------------------------------------

def encode_radiality(model: ConicModel, atlas: VariableAtlas, area: OffOutageArea,
                     policy: BigMPolicy) -> list[Constraint]:
    """Orientation, energization and single-commodity flow rows.

    Every energized off-outage node has exactly one parent and consumes one
    unit of commodity that only available ties can supply, so energized
    trees reach a healthy feeder and contain no loop.
    """
    net = area.net
    nset = area.node_set
    rows: list[Constraint] = []
    parents: dict[str, list[Expr]] = {n: [] for n in area.nodes}
    inflow: dict[str, list[Expr]] = {n: [] for n in area.nodes}
    outflow: dict[str, list[Expr]] = {n: [] for n in area.nodes}
    supply = []
    ava = set(area.ava)

    def add(con, name):
        rows.append(model.add_row(con, name))

    for l in area.lines:
        ln = net.line_by_id[l]
        if l in ava:
            inside = ln.j if ln.j in nset else ln.i
            b = atlas.mu[l]
            atlas.beta[(l, 0 if inside == ln.j else 1)] = b
            f = model.add_var(f"Psi[{l}]", 0.0, policy.m_flow)
            atlas.psi[(l, 0 if inside == ln.j else 1)] = f
            add(f <= b * policy.m_flow, f"flowcap[{l}]")
            parents[inside].append(b)
            inflow[inside].append(f)
            supply.append(f)
            continue
        b0 = model.add_binary(f"beta[{l},{ln.i}>{ln.j}]")
        b1 = model.add_binary(f"beta[{l},{ln.j}>{ln.i}]")
        atlas.beta[(l, 0)], atlas.beta[(l, 1)] = b0, b1
        add(b0 + b1 == atlas.mu[l], f"orient[{l}]")
        f0 = model.add_var(f"Psi[{l},{ln.i}>{ln.j}]", 0.0, policy.m_flow)
        f1 = model.add_var(f"Psi[{l},{ln.j}>{ln.i}]", 0.0, policy.m_flow)
        atlas.psi[(l, 0)], atlas.psi[(l, 1)] = f0, f1
        add(f0 <= b0 * policy.m_flow, f"flowcap[{l},0]")
        add(f1 <= b1 * policy.m_flow, f"flowcap[{l},1]")
        parents[ln.j].append(b0)
        parents[ln.i].append(b1)
        inflow[ln.j].append(f0)
        outflow[ln.i].append(f0)
        inflow[ln.i].append(f1)
        outflow[ln.j].append(f1)
    for n in area.nodes:
        add(quicksum(parents[n]) == atlas.phi[n], f"parent[{n}]")
        add(quicksum(inflow[n]) - quicksum(outflow[n]) == atlas.phi[n], f"commodity[{n}]")
    add(quicksum(supply) == quicksum(atlas.phi[n] for n in area.nodes), "commodity_total")
    return rows


def encode_load_pickup(model: ConicModel, atlas: VariableAtlas, area: OffOutageArea,
                       steps: Sequence[int]) -> list[Constraint]:
    """Pickup binaries: bounded by energization and never dropped once picked."""
    net = area.net
    rows = []
    for n in area.nodes:
        ld = net.load_at.get(n)
        if ld is None:
            continue
        if not ld.breaker:
            for t in steps:
                atlas.alpha[(n, t)] = atlas.phi[n]
            continue
        prev = None
        for t in steps:
            a = model.add_binary(f"alpha[{n},{t}]")
            atlas.alpha[(n, t)] = a
            rows.append(model.add_row(a <= atlas.phi[n], f"pickup[{n},{t}]"))
            if prev is not None:
                rows.append(model.add_row(prev <= a, f"monotone[{n},{t}]"))
            prev = a
    for n in set(atlas.phi) - area.node_set:
        for t in steps:
            atlas.alpha.setdefault((n, t), 1.0)
    return rows


# -- power flow --------------------------------------------------------------

def _add_pf_vars(model, atlas, net, scope, t, u_range, with_f: bool):
    subs = net.substations
    for n in scope.nodes:
        if n in subs:
            v = net.slack_voltage ** 2
            atlas.U[(n, t)] = model.add_var(f"U[{n},{t}]", v, v)
            atlas.P_sub[(n, t)] = model.add_var(f"Psub[{n},{t}]")
            atlas.Q_sub[(n, t)] = model.add_var(f"Qsub[{n},{t}]")
        elif is_const(atlas.phi[n]):
            atlas.U[(n, t)] = model.add_var(f"U[{n},{t}]", *u_range)
        else:
            atlas.U[(n, t)] = model.add_var(f"U[{n},{t}]", 0.0, u_range[1])
    for l in scope.lines:
        ln = net.line_by_id[l]
        if with_f:
            atlas.F[(l, t)] = model.add_var(f"F[{l},{t}]", 0.0, ln.f_max ** 2)
        atlas.p[(l, t)] = model.add_var(f"p[{l},{t}]")
        atlas.q[(l, t)] = model.add_var(f"q[{l},{t}]")


def _add_dg_vars(model, atlas, net, scope, t):
    rows, cones = [], []
    for n in scope.nodes:
        for g in net.dgs_at.get(n, ()):
            phi = atlas.phi[n]
            P = model.add_var(f"Pinj[{g.id},{t}]", 0.0, g.p_max)
            atlas.P_inj[(g.id, t)] = P
            if g.dispatchable:
                atlas.Q_inj[(g.id, t)] = model.add_var(f"Qinj[{g.id},{t}]", -g.s_max, g.s_max)
                if not is_const(phi):
                    rows.append(model.add_row(P <= phi * g.p_max, f"dgcap[{g.id},{t}]"))
            else:
                atlas.Q_inj[(g.id, t)] = 0.0
                rows.append(model.add_row(P == phi * g.profile[t], f"dgprofile[{g.id},{t}]"))
    return rows, cones


def _balance(model, atlas, net, scope, t, lossy: bool):
    rows = []
    out_p = {n: LinExpr() for n in scope.nodes}
    out_q = {n: LinExpr() for n in scope.nodes}
    for l in scope.lines:
        ln = net.line_by_id[l]
        a, b = scope.orient[l]
        p, q = atlas.p[(l, t)], atlas.q[(l, t)]
        out_p[a] += p
        out_q[a] += q
        out_p[b] -= p
        out_q[b] -= q
        if lossy:
            out_p[b] += atlas.F[(l, t)] * ln.r
            out_q[b] += atlas.F[(l, t)] * ln.x
    for n in scope.nodes:
        gen_p, gen_q = LinExpr(), LinExpr()
        for g in net.dgs_at.get(n, ()):
            gen_p += atlas.P_inj[(g.id, t)]
            gen_q += atlas.Q_inj[(g.id, t)]
        if (n, t) in atlas.P_sub:
            gen_p += atlas.P_sub[(n, t)]
            gen_q += atlas.Q_sub[(n, t)]
        ld = net.load_at.get(n)
        dem_p, dem_q = LinExpr(), LinExpr()
        if ld is not None:
            alpha = atlas.alpha.get((n, t), 1.0)
            dem_p += LinExpr.of(alpha) * ld.p[t]
            dem_q += LinExpr.of(alpha) * ld.q[t]
        rows.append(model.add_row(out_p[n] == gen_p - dem_p, f"balP[{n},{t}]"))
        rows.append(model.add_row(out_q[n] == gen_q - dem_q, f"balQ[{n},{t}]"))
    return rows


def _voltage(model, atlas, net, scope, t, m_volt: float, lossy: bool):
    rows = []
    for l in scope.lines:
        ln = net.line_by_id[l]
        a, b = scope.orient[l]
        drop = atlas.U[(b, t)] - atlas.U[(a, t)] + (atlas.p[(l, t)] * ln.r
                                                     + atlas.q[(l, t)] * ln.x) * 2.0
        if lossy:
            drop = drop - atlas.F[(l, t)] * (ln.r ** 2 + ln.x ** 2)
        if l in scope.switched:
            slack = (1 - atlas.mu[l]) * m_volt
            rows.append(model.add_row(drop <= slack, f"volt_hi[{l},{t}]"))
            rows.append(model.add_row(drop >= -slack, f"volt_lo[{l},{t}]"))
        else:
            rows.append(model.add_row(drop == 0, f"volt[{l},{t}]"))
    return rows


def encode_socp_powerflow(model: ConicModel, atlas: VariableAtlas, net: Network,
                          scope: PowerFlowScope, policy: BigMPolicy | None, t: int):
    """Branch-flow rows with losses, one rotated cone per line and DG caps for step ``t``.

    Returns ``(rows, cones)``. Variables are created in the atlas; limits
    linking them to binaries come from :func:`encode_links`.
    """
    _add_pf_vars(model, atlas, net, scope, t, (net.v_min ** 2, net.v_max ** 2), True)
    rows, cones = _add_dg_vars(model, atlas, net, scope, t)
    for n in scope.nodes:
        for g in net.dgs_at.get(n, ()):
            if g.dispatchable:
                head = LinExpr.of(atlas.phi[n]) * g.s_max
                cones.append(model.add_cone(head, [atlas.P_inj[(g.id, t)], atlas.Q_inj[(g.id, t)]],
                                            f"dgcone[{g.id},{t}]"))
    rows += _balance(model, atlas, net, scope, t, lossy=True)
    m_volt = policy.m_volt if policy is not None else 0.0
    rows += _voltage(model, atlas, net, scope, t, m_volt, lossy=True)
    for l in scope.lines:
        a, _ = scope.orient[l]
        F, U = atlas.F[(l, t)], atlas.U[(a, t)]
        cones.append(model.add_cone(F + U, [atlas.p[(l, t)] * 2.0, atlas.q[(l, t)] * 2.0, F - U],
                                    f"flowcone[{l},{t}]"))
    return rows, cones


def encode_links(model: ConicModel, atlas: VariableAtlas, net: Network, scope: PowerFlowScope,
                 policy: BigMPolicy, t: int) -> list[Constraint]:
    """Open line forces zero flow; dead node forces zero voltage; live node stays in band."""
    rows = []
    for l in scope.lines:
        mu = atlas.mu[l]
        if is_const(mu):
            continue
        ln = net.line_by_id[l]
        m = policy.m_pq[l]
        if (l, t) in atlas.F:
            rows.append(model.add_row(atlas.F[(l, t)] <= mu * ln.f_max ** 2, f"amp[{l},{t}]"))
        for name, v in (("p", atlas.p[(l, t)]), ("q", atlas.q[(l, t)])):
            rows.append(model.add_row(v <= mu * m, f"{name}_hi[{l},{t}]"))
            rows.append(model.add_row(v >= mu * (-m), f"{name}_lo[{l},{t}]"))
    for n in scope.nodes:
        phi = atlas.phi[n]
        if is_const(phi) or n in net.substations:
            continue
        U = atlas.U[(n, t)]
        rows.append(model.add_row(U >= phi * net.v_min ** 2, f"vmin[{n},{t}]"))
        rows.append(model.add_row(U <= phi * net.v_max ** 2, f"vmax[{n},{t}]"))
    return rows


def polygon_rows(model: ConicModel, x, y, radius: Expr, sides: int, name: str) -> list[Constraint]:
    """Circumscribed regular polygon: cos(k) x + sin(k) y <= radius for each side."""
    rows = []
    for k in range(sides):
        th = 2.0 * math.pi * k / sides
        c, s = math.cos(th), math.sin(th)
        e = LinExpr()
        if abs(c) > 1e-15:
            e += LinExpr.of(x) * c
        if abs(s) > 1e-15:
            e += LinExpr.of(y) * s
        rows.append(model.add_row(e <= radius, f"{name}[{k}]"))
    return rows


def encode_distflow(model: ConicModel, atlas: VariableAtlas, net: Network, scope: PowerFlowScope,
                    relax: DistFlowRelaxation, t: int) -> list[Constraint]:
    """Lossless linear branch flow with polygonal line and DG capacity limits."""
    _add_pf_vars(model, atlas, net, scope, t, (relax.u_min, relax.u_max), False)
    rows, _ = _add_dg_vars(model, atlas, net, scope, t)
    for n in scope.nodes:
        for g in net.dgs_at.get(n, ()):
            if g.dispatchable:
                rows += polygon_rows(model, atlas.P_inj[(g.id, t)], atlas.Q_inj[(g.id, t)],
                                     LinExpr.of(atlas.phi[n]) * relax.h_bar[g.id], relax.sides,
                                     f"dgpoly[{g.id},{t}]")
    rows += _balance(model, atlas, net, scope, t, lossy=False)
    rows += _voltage(model, atlas, net, scope, t, relax.u_max, lossy=False)
    for l in scope.lines:
        mu = atlas.mu[l]
        rows += polygon_rows(model, atlas.p[(l, t)], atlas.q[(l, t)],
                             LinExpr.of(mu) * relax.s_bar[l], relax.sides, f"linepoly[{l},{t}]")
    for n in scope.nodes:
        phi = atlas.phi[n]
        if is_const(phi) or n in net.substations:
            continue
        U = atlas.U[(n, t)]
        rows.append(model.add_row(U >= phi * relax.u_min, f"vmin[{n},{t}]"))
        rows.append(model.add_row(U <= phi * relax.u_max, f"vmax[{n},{t}]"))
    return rows


# -- disjunctions ------------------------------------------------------------

def _relaxed(row: Constraint, amount: LinExpr, name: str) -> Constraint:
    if row.sense == "<=":
        return Constraint(row.expr - amount, "<=", name)
    if row.sense == ">=":
        return Constraint(row.expr + amount, ">=", name)
    raise ValueError("disjunctions need inequality rows")


def encode_disjunction(model: ConicModel, rows: Sequence[Constraint], big_m: Sequence[float],
                       name: str) -> tuple[list[Constraint], list[Var]]:
    """At least one of ``rows`` holds, using len(rows) - 1 chained binaries.

    psi_1 = 0 selects row 0; psi_1 = 1, psi_2 = 0 selects row 1; and so on.
    Row k is relaxed by big_m[k] times every binary term that deselects it.
    """
    k = len(rows)
    if k < 2 or len(big_m) != k:
        raise ValueError("need at least two rows and one constant per row")
    psi = [model.add_binary(f"psi[{name},{j}]") for j in range(1, k)]
    out = []
    for j, (row, m) in enumerate(zip(rows, big_m)):
        amount = LinExpr()
        for s in psi[:j]:
            amount += (1 - s) * m
        if j < k - 1:
            amount += psi[j] * m
        out.append(model.add_row(_relaxed(row, amount, f"{name}[{j}]")))
    return out, psi


def encode_either_or(model: ConicModel, row_a: Constraint, row_b: Constraint, m_1: float,
                     m_2: float, name: str = "eo") -> tuple[list[Constraint], Var]:
    """psi = 0 enforces ``row_a`` (``row_b`` relaxed by m_2); psi = 1 the reverse with m_1."""
    rows, psi = encode_disjunction(model, [row_a, row_b], [m_1, m_2], name)
    return rows, psi[0]


def encode_conditional(model: ConicModel, complements: Sequence[Constraint],
                       consequent: Constraint, policy: BigMPolicy, m_c: float,
                       name: str = "cond") -> tuple[list[Constraint], list[Var]]:
    """Encode "all antecedent rows hold => consequent" as a disjunction.

    ``complements`` are the integer complements of the antecedent rows; the
    result is "complement_1 or complement_2 or consequent".
    """
    rows = list(complements) + [consequent]
    ms = [policy.m_1] * (len(rows) - 2) + [policy.m_2, m_c]
    return encode_disjunction(model, rows, ms, name)
