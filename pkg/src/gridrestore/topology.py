"""Off-outage area, radiality checks and cluster partitioning."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from .network import FaultScenario, Line, Network, NetworkError, _UnionFind, check_scenario

_GROUND = "\x00ground"


class NotRadialError(ValueError):
    """A configuration that is not radial was passed where one is required."""


@dataclass(frozen=True)
class OffOutageArea:
    """De-energized region after fault isolation and the switches that can restore it.

    ``ava``/``int_``/``sec`` partition the switchable lines ``switchable``;
    ``fixed`` are lines inside the area without a switch (always closed).
    ``scope_nodes`` adds the healthy feeders reachable through available ties.
    """

    net: Network
    fault: FaultScenario
    nodes: tuple[str, ...]
    energized: frozenset[str]
    fault_zone: frozenset[str]
    locked_open: frozenset[str]
    ava: tuple[str, ...]
    int_: tuple[str, ...]
    sec: tuple[str, ...]
    fixed: tuple[str, ...]
    scope_nodes: tuple[str, ...]
    scope_lines: tuple[str, ...]

    @cached_property
    def node_set(self) -> frozenset[str]:
        return frozenset(self.nodes)

    @cached_property
    def switchable(self) -> tuple[str, ...]:
        order = self.net.line_order
        return tuple(sorted(self.ava + self.int_ + self.sec, key=order.__getitem__))

    @cached_property
    def lines(self) -> tuple[str, ...]:
        """W*: lines inside the area plus available ties."""
        order = self.net.line_order
        return tuple(sorted(self.switchable + self.fixed, key=order.__getitem__))

    @cached_property
    def healthy_closed(self) -> frozenset[str]:
        return frozenset(self.scope_lines)

    @property
    def empty(self) -> bool:
        return not self.nodes


def _reach(net: Network, sources: Iterable[str], closed: set[str], blocked: set[str]) -> set[str]:
    seen = set(s for s in sources if s not in blocked)
    todo = deque(seen)
    while todo:
        a = todo.popleft()
        for ln in net.incident[a]:
            if ln.id not in closed:
                continue
            b = ln.other(a)
            if b not in seen and b not in blocked:
                seen.add(b)
                todo.append(b)
    return seen


def compute_off_outage(net: Network, fault: FaultScenario) -> OffOutageArea:
    """Derive N*, W* and the switch partition for an isolated fault."""
    check_scenario(net, fault)
    faulted_lines = {e for e in fault.faulted_elements if e in net.line_by_id}
    faulted_subs = {e for e in fault.faulted_elements if e in net.substations}
    opened = set(fault.isolation_openings)
    closed = {ln.id for ln in net.lines if ln.base_closed and ln.id not in opened}

    # faulted zone: what stays galvanically attached to a faulted element
    starts = set(faulted_subs)
    for lid in faulted_lines:
        if lid in closed:
            ln = net.line_by_id[lid]
            starts.update((ln.i, ln.j))
    zone = _reach(net, starts, closed, set())
    healthy_subs = net.substations - faulted_subs
    for s in sorted(zone & healthy_subs, key=net.node_order.__getitem__):
        raise NetworkError("isolation does not disconnect the fault from substation", s)

    energized = _reach(net, healthy_subs, closed - faulted_lines, zone)
    nodes = tuple(n for n in net.node_ids if n not in energized and n not in zone)
    nset = set(nodes)
    locked = set(opened) | faulted_lines
    for ln in net.lines:
        if ln.i in zone or ln.j in zone:
            locked.add(ln.id)

    ava, int_, sec, fixed = [], [], [], []
    for ln in net.lines:
        if ln.id in locked:
            continue
        ins = (ln.i in nset) + (ln.j in nset)
        if ins == 2:
            if ln.switch is None:
                fixed.append(ln.id)
            elif ln.is_tie:
                int_.append(ln.id)
            else:
                sec.append(ln.id)
        elif ins == 1 and ln.is_tie:
            outside = ln.j if ln.i in nset else ln.i
            if outside in energized:
                ava.append(ln.id)

    scope_nodes, scope_lines = _healthy_scope(net, energized, nset, ava, closed - locked)
    return OffOutageArea(net, fault, nodes, frozenset(energized), frozenset(zone),
                         frozenset(locked), tuple(ava), tuple(int_), tuple(sec), tuple(fixed),
                         scope_nodes, scope_lines)


def _healthy_scope(net, energized, nset, ava, closed):
    """Healthy feeders touched by available ties, with their substations."""
    subs = net.substations
    anchors = set()
    for lid in ava:
        ln = net.line_by_id[lid]
        anchors.add(ln.i if ln.i not in nset else ln.j)
    # feeder = component of the healthy graph once substations are split off
    seen: set[str] = set()
    todo = deque()
    for a in anchors:
        if a not in seen:
            seen.add(a)
            todo.append(a)
    while todo:
        a = todo.popleft()
        if a in subs:
            continue
        for ln in net.incident[a]:
            b = ln.other(a)
            if ln.id in closed and b in energized and b not in seen:
                seen.add(b)
                todo.append(b)
    nodes = tuple(n for n in net.node_ids if n in seen)
    lines = tuple(ln.id for ln in net.lines
                  if ln.id in closed and ln.i in seen and ln.j in seen
                  and not (ln.i in subs and ln.j in subs))
    return nodes, lines


@dataclass(frozen=True)
class Configuration:
    """Status (1 closed and energized, 0 otherwise) of every switchable line."""

    status: tuple[tuple[str, int], ...]

    @classmethod
    def of(cls, area: OffOutageArea, values: Mapping[str, float | int]) -> "Configuration":
        missing = [l for l in area.switchable if l not in values]
        if missing:
            raise ValueError(f"configuration lacks lines {missing}")
        return cls(tuple((l, int(round(float(values[l])))) for l in area.switchable))

    @classmethod
    def closed(cls, area: OffOutageArea, lines: Iterable[str]) -> "Configuration":
        on = set(lines)
        unknown = on - set(area.switchable)
        if unknown:
            raise ValueError(f"lines {sorted(unknown)} are not switchable in the area")
        return cls(tuple((l, int(l in on)) for l in area.switchable))

    @classmethod
    def base(cls, area: OffOutageArea) -> "Configuration":
        """Pre-fault switch states restricted to the area."""
        net = area.net
        return cls(tuple((l, int(net.line_by_id[l].base_closed)) for l in area.switchable))

    def __getitem__(self, line: str) -> int:
        return self.as_dict()[line]

    def as_dict(self) -> dict[str, int]:
        return dict(self.status)

    @property
    def closed_lines(self) -> tuple[str, ...]:
        return tuple(l for l, s in self.status if s)

    def key(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.status)


@dataclass(frozen=True)
class RadialityCheck:
    ok: bool
    kind: str = ""  # "cycle" or "island"
    elements: tuple[str, ...] = ()
    energized: frozenset[str] = frozenset()

    def __bool__(self) -> bool:
        return self.ok

    @property
    def certificate(self) -> str:
        if self.ok:
            return ""
        return f"{self.kind}: {', '.join(self.elements)}"


def closed_lines(area: OffOutageArea, config: Configuration) -> list[Line]:
    """All closed lines relevant to the area under ``config`` (network order)."""
    net = area.net
    on = set(config.closed_lines) | set(area.fixed) | set(area.scope_lines)
    return [ln for ln in net.lines if ln.id in on]


def is_radial(area: OffOutageArea, config: Configuration) -> RadialityCheck:
    """Check that closed lines form a forest whose energized trees reach one substation.

    Substations are tied to a common ground so that a path between two
    substations is reported as a cycle. A closed switchable line in a tree
    without a substation is an island.
    """
    net = area.net
    nodes = set(area.nodes) | set(area.scope_nodes)
    subs = [s for s in area.scope_nodes if s in net.substations]
    uf = _UnionFind(list(nodes) + [_GROUND])
    adj: dict[str, list[tuple[str, str]]] = {n: [] for n in nodes}
    adj[_GROUND] = []
    for s in subs:
        uf.union(s, _GROUND)
        adj[s].append((_GROUND, ""))
        adj[_GROUND].append((s, ""))
    lines = closed_lines(area, config)
    for ln in lines:
        if not uf.union(ln.i, ln.j):
            path = _path(adj, ln.i, ln.j)
            return RadialityCheck(False, "cycle", tuple(l for l in path if l) + (ln.id,))
        adj[ln.i].append((ln.j, ln.id))
        adj[ln.j].append((ln.i, ln.id))
    g = uf.find(_GROUND)
    switchable = set(area.switchable)
    for ln in lines:
        if ln.id in switchable and uf.find(ln.i) != g:
            comp = sorted((n for n in nodes if uf.find(n) == uf.find(ln.i)),
                          key=net.node_order.__getitem__)
            return RadialityCheck(False, "island", tuple(comp))
    energized = frozenset(n for n in area.nodes if uf.find(n) == g)
    return RadialityCheck(True, energized=energized)


def _path(adj, a, b) -> list[str]:
    prev = {a: (None, "")}
    todo = deque([a])
    while todo:
        u = todo.popleft()
        if u == b:
            break
        for v, lid in adj[u]:
            if v not in prev:
                prev[v] = (u, lid)
                todo.append(v)
    out = []
    u = b
    while prev[u][0] is not None:
        out.append(prev[u][1])
        u = prev[u][0]
    return out[::-1]


@dataclass(frozen=True)
class Cluster:
    """Off-outage nodes fed by one substation under a fixed configuration.

    ``nodes`` is X (off-outage nodes only); ``component`` adds the healthy
    feeder nodes and the slack substation that the power flow needs.
    ``lines`` is the switchable line set used by cuts, ``closed`` every
    closed line of the component, ``sources`` the lines injecting into X.
    """

    index: int
    nodes: tuple[str, ...]
    lines: tuple[str, ...]
    sources: tuple[str, ...]
    component: tuple[str, ...]
    closed: tuple[str, ...]
    root: str
    parent: tuple[tuple[str, str, str], ...]  # (child, parent, line) in BFS order from root

    def key(self) -> tuple:
        return (self.component, self.closed)


def partition_clusters(area: OffOutageArea, config: Configuration) -> list[Cluster]:
    """Split the energized off-outage nodes into clusters (one per feeding substation).

    Components are taken after splitting the closed-line graph at substation
    nodes, so each cluster hangs from exactly one slack bus.
    """
    return [c for c in feeder_components(area, config) if c.nodes]


def feeder_components(area: OffOutageArea, config: Configuration) -> list[Cluster]:
    """All slack-rooted components in scope: clusters first, then idle healthy feeders."""
    chk = is_radial(area, config)
    if not chk.ok:
        raise NotRadialError(chk.certificate)
    net = area.net
    subs = net.substations
    lines = closed_lines(area, config)
    adj: dict[str, list[Line]] = {}
    for ln in lines:
        adj.setdefault(ln.i, []).append(ln)
        adj.setdefault(ln.j, []).append(ln)
    seen: set[str] = set()
    comps = []
    starts = [n for n in area.nodes if n in chk.energized]
    starts += [n for n in area.scope_nodes if n not in subs]
    for start in starts:
        if start in seen:
            continue
        comp = {start}
        todo = deque([start])
        root = None
        while todo:
            a = todo.popleft()
            for ln in adj.get(a, ()):
                b = ln.other(a)
                if b in subs:
                    root = b
                    continue
                if b not in comp:
                    comp.add(b)
                    todo.append(b)
        seen |= comp
        comps.append((comp, root))

    switchable = area.switchable
    sw_set = set(switchable)
    nset = area.node_set
    dg_nodes = set(net.dgs_at)
    order = net.line_order
    out = []
    for idx, (comp, root) in enumerate(comps):
        members = comp | {root}
        closed = [ln for ln in lines if ln.i in members and ln.j in members]
        parent = _bfs_tree(root, closed)
        X = tuple(n for n in area.nodes if n in comp)
        L = tuple(l for l in switchable
                  if net.line_by_id[l].i in comp or net.line_by_id[l].j in comp)
        below = _subtree_has(parent, dg_nodes)
        srcs = []
        for child, par, lid in parent:
            if lid not in sw_set or child not in nset:
                continue
            if par not in nset:
                srcs.append(lid)  # boundary line into X
            elif below[child]:
                srcs.append(lid)  # internal tie with generation downstream
        out.append(Cluster(idx, X, L, tuple(sorted(srcs, key=order.__getitem__)),
                           tuple(n for n in net.node_ids if n in members),
                           tuple(ln.id for ln in closed), root, tuple(parent)))
    return out


def _bfs_tree(root: str, closed: list[Line]) -> list[tuple[str, str, str]]:
    adj: dict[str, list[Line]] = {}
    for ln in closed:
        adj.setdefault(ln.i, []).append(ln)
        adj.setdefault(ln.j, []).append(ln)
    seen = {root}
    todo = deque([root])
    out = []
    while todo:
        a = todo.popleft()
        for ln in adj.get(a, ()):
            b = ln.other(a)
            if b not in seen:
                seen.add(b)
                out.append((b, a, ln.id))
                todo.append(b)
    return out


def _subtree_has(parent, marked: set[str]) -> dict[str, bool]:
    has = {child: child in marked for child, _, _ in parent}
    for child, par, _ in reversed(parent):
        if has[child] and par in has:
            has[par] = True
    return has
