"""AC power-flow check of restoration plans by backward/forward sweep."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .network import FaultScenario, Network, _UnionFind
from .plan import RestorationPlan
from .topology import NotRadialError, closed_lines, compute_off_outage

V_TOL = 1e-4   # p.u.
I_TOL = 1e-3   # A


class PowerFlowError(RuntimeError):
    """The sweep did not converge."""


@dataclass
class FlowSolution:
    """Squared voltages ``U``, sending-end flows ``p, q`` and squared currents ``F``."""

    t: int
    U: dict[str, float]
    p: dict[str, float]
    q: dict[str, float]
    F: dict[str, float]
    iterations: int
    parent: dict[str, tuple[str, str]] = field(default_factory=dict)

    def voltage(self, n: str) -> float:
        return math.sqrt(self.U[n])

    def current(self, line: str) -> float:
        return math.sqrt(self.F[line])


def _trees(net: Network, closed: Iterable[str]) -> list[list[tuple[str, str, str]]]:
    """BFS orders (child, parent, line) from every substation; rejects loops."""
    closed = [net.line_by_id[l] for l in closed]
    ground = "\x00ground"
    uf = _UnionFind(list(net.node_ids) + [ground])
    for s in net.substations:
        uf.union(s, ground)
    adj: dict[str, list] = {}
    for ln in closed:
        if not uf.union(ln.i, ln.j):
            raise NotRadialError(f"closing {ln.id} creates a loop")
        adj.setdefault(ln.i, []).append(ln)
        adj.setdefault(ln.j, []).append(ln)
    out = []
    for s in sorted(net.substations, key=net.node_order.__getitem__):
        order = []
        seen = {s}
        todo = [s]
        while todo:
            nxt = []
            for a in todo:
                for ln in adj.get(a, ()):
                    b = ln.other(a)
                    if b not in seen:
                        seen.add(b)
                        order.append((b, a, ln.id))
                        nxt.append(b)
            todo = nxt
        out.append((s, order))
    return out


def power_flow(net: Network, closed: Iterable[str], t: int = 0,
               pickup_t: Mapping[str, float] | None = None,
               dg_setpoints_t: Mapping[str, tuple[float, float]] | None = None,
               tol: float = 1e-10, max_iter: int = 200) -> FlowSolution:
    """Exact branch-flow solution of a radial network at step ``t``.

    ``closed`` lists the closed line ids. Loads are scaled by ``pickup_t``
    (default 1). Non-dispatchable DGs follow their profile; dispatchable
    ones inject ``dg_setpoints_t`` (default zero). Nodes not connected to a
    substation are left out.
    """
    pickup_t = pickup_t or {}
    dg_setpoints_t = dg_setpoints_t or {}
    vs2 = net.slack_voltage ** 2
    inj_p: dict[str, float] = {}
    inj_q: dict[str, float] = {}
    for ld in net.loads:
        a = float(pickup_t.get(ld.node, 1.0))
        inj_p[ld.node] = inj_p.get(ld.node, 0.0) - a * ld.p[t]
        inj_q[ld.node] = inj_q.get(ld.node, 0.0) - a * ld.q[t]
    for g in net.dgs:
        if g.dispatchable:
            P, Q = dg_setpoints_t.get(g.id, (0.0, 0.0))
        else:
            P, Q = g.profile[t], 0.0
        inj_p[g.node] = inj_p.get(g.node, 0.0) + P
        inj_q[g.node] = inj_q.get(g.node, 0.0) + Q

    U: dict[str, float] = {}
    p: dict[str, float] = {}
    q: dict[str, float] = {}
    F: dict[str, float] = {}
    parent: dict[str, tuple[str, str]] = {}
    it_max = 0
    for root, order in _trees(net, closed):
        U[root] = vs2
        for child, par, lid in order:
            U[child] = vs2
            F[lid] = 0.0
            parent[child] = (par, lid)
        it = 0
        while True:
            it += 1
            if it > max_iter:
                raise PowerFlowError(f"sweep from {root} did not converge in {max_iter} iterations")
            # backward: sending-end flow = downstream flows + losses - injection
            down_p: dict[str, float] = {}
            down_q: dict[str, float] = {}
            for child, par, lid in reversed(order):
                ln = net.line_by_id[lid]
                pv = down_p.get(child, 0.0) - inj_p.get(child, 0.0) + ln.r * F[lid]
                qv = down_q.get(child, 0.0) - inj_q.get(child, 0.0) + ln.x * F[lid]
                p[lid], q[lid] = pv, qv
                down_p[par] = down_p.get(par, 0.0) + pv
                down_q[par] = down_q.get(par, 0.0) + qv
            # forward: voltages, then currents from the new sending-end voltages
            delta = 0.0
            for child, par, lid in order:
                ln = net.line_by_id[lid]
                u = U[par] - 2.0 * (ln.r * p[lid] + ln.x * q[lid]) + (ln.r ** 2 + ln.x ** 2) * F[lid]
                if not math.isfinite(u) or u <= 0.0:
                    raise PowerFlowError(f"voltage collapse at {child} (iteration {it})")
                delta = max(delta, abs(u - U[child]))
                U[child] = u
            for child, par, lid in order:
                F[lid] = (p[lid] ** 2 + q[lid] ** 2) / U[par]
            if delta < tol:
                break
        it_max = max(it_max, it)
    return FlowSolution(t, U, p, q, F, it_max, parent)


def balance_residual(net: Network, sol: FlowSolution, pickup_t: Mapping[str, float] | None = None,
                     dg_setpoints_t: Mapping[str, tuple[float, float]] | None = None) -> float:
    """Largest nodal active/reactive mismatch of ``sol`` at non-slack nodes."""
    pickup_t = pickup_t or {}
    dg_setpoints_t = dg_setpoints_t or {}
    t = sol.t
    worst = 0.0
    for n in sol.U:
        if n in net.substations:
            continue
        par, lid = sol.parent[n]
        ln = net.line_by_id[lid]
        rp = sol.p[lid] - ln.r * sol.F[lid]
        rq = sol.q[lid] - ln.x * sol.F[lid]
        out_p = sum(sol.p[c_l] for c, (pp, c_l) in sol.parent.items() if pp == n)
        out_q = sum(sol.q[c_l] for c, (pp, c_l) in sol.parent.items() if pp == n)
        gp = gq = 0.0
        for g in net.dgs_at.get(n, ()):
            if g.dispatchable:
                P, Q = dg_setpoints_t.get(g.id, (0.0, 0.0))
            else:
                P, Q = g.profile[t], 0.0
            gp += P
            gq += Q
        ld = net.load_at.get(n)
        a = float(pickup_t.get(n, 1.0))
        lp = a * ld.p[t] if ld else 0.0
        lq = a * ld.q[t] if ld else 0.0
        worst = max(worst, abs(rp + gp - lp - out_p), abs(rq + gq - lq - out_q))
    return worst


@dataclass
class Margin:
    value: float
    element: str
    time_step: int


@dataclass
class Violation:
    kind: str       # voltage | current
    element: str
    time_step: int
    value: float
    limit: float
    margin: float


@dataclass
class MarginReport:
    """Minimum voltage margin (p.u.) and current margin (A) per step, plus violations."""

    voltage: list[Margin] = field(default_factory=list)
    current: list[Margin] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    current_base_amps: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def min_voltage_margin(self) -> Margin | None:
        return min(self.voltage, key=lambda m: m.value, default=None)

    @property
    def min_current_margin(self) -> Margin | None:
        return min(self.current, key=lambda m: m.value, default=None)

    @property
    def empty(self) -> bool:
        return not self.voltage and not self.current

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("min_voltage_margin", "min_current_margin"):
            m = getattr(self, key)
            d[key] = None if m is None else asdict(m)
        d["ok"] = self.ok
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def table(self) -> str:
        rows = [f"{'t':>4} {'min V margin (p.u.)':>20} {'node':>8} {'min I margin (A)':>18} {'line':>10}"]
        cur = {m.time_step: m for m in self.current}
        for v in self.voltage:
            c = cur.get(v.time_step)
            rows.append(f"{v.time_step:>4} {v.value:>20.6f} {v.element:>8} "
                        + (f"{c.value:>18.3f} {c.element:>10}" if c else f"{'-':>18} {'-':>10}"))
        if self.violations:
            rows.append("violations:")
            rows.extend(f"  {x.kind} {x.element} t={x.time_step} value={x.value:.6g} "
                        f"limit={x.limit:.6g}" for x in self.violations)
        else:
            rows.append("no violations")
        return "\n".join(rows)


def margins(net: Network, sol: FlowSolution, report: MarginReport) -> None:
    """Append the step's minimum margins and violations to ``report``."""
    vmin, vmax = net.v_min, net.v_max
    base = net.current_base_amps()
    t = sol.t
    best_v = None
    for n in net.node_ids:
        if n not in sol.U or n in net.substations:
            continue
        v = sol.voltage(n)
        m = min(v - vmin, vmax - v)
        if best_v is None or m < best_v.value:
            best_v = Margin(m, n, t)
        if m < -V_TOL:
            report.violations.append(Violation("voltage", n, t, v, vmin if v < vmin else vmax, m))
    best_i = None
    for ln in net.lines:
        if ln.id not in sol.F:
            continue
        amps = sol.current(ln.id) * base
        cap = ln.f_max * base
        m = cap - amps
        if best_i is None or m < best_i.value:
            best_i = Margin(m, ln.id, t)
        if m < -I_TOL:
            report.violations.append(Violation("current", ln.id, t, amps, cap, m))
    if best_v is not None:
        report.voltage.append(best_v)
    if best_i is not None:
        report.current.append(best_i)


def validate_plan(net: Network, fault: FaultScenario, plan: RestorationPlan) -> MarginReport:
    """Sweep every step of the plan over the in-scope network and collect margins."""
    report = MarginReport(current_base_amps=net.current_base_amps())
    area = compute_off_outage(net, fault)
    if area.empty:
        return report
    config = plan.configuration(area)
    closed = [ln.id for ln in closed_lines(area, config)]
    steps = list(plan.steps)
    for k, t in enumerate(steps):
        pickup_t = {n: a[k] for n, a in plan.pickup.items()}
        for n in area.nodes:
            pickup_t.setdefault(n, 0)
        dg_t = {g: tuple(v[k]) for g, v in plan.dg_setpoints.items()}
        sol = power_flow(net, closed, t, pickup_t, dg_t)
        margins(net, sol, report)
    return report
