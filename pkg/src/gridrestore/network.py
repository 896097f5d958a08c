"""Grid data model and JSON loaders."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

SCHEMA_VERSION = "1.0"
SECTIONALIZING = "sectionalizing"
TIE = "tie"
MANUAL = "manual"
REMOTE = "remote"
DISPATCHABLE = "dispatchable"
NON_DISPATCHABLE = "non-dispatchable"

# default operation times in minutes
MANUAL_SWITCH_MIN = 30.0
REMOTE_SWITCH_MIN = 0.5


class NetworkError(ValueError):
    """Invalid network or scenario document."""

    def __init__(self, message: str, element: str | None = None):
        super().__init__(message if element is None else f"{message}: {element}")
        self.element = element


@dataclass(frozen=True)
class Node:
    id: str
    substation: bool = False


@dataclass(frozen=True)
class Switch:
    id: str
    kind: str
    actuation: str = MANUAL
    op_time_min: float = MANUAL_SWITCH_MIN

    @property
    def normally_closed(self) -> bool:
        return self.kind == SECTIONALIZING


@dataclass(frozen=True)
class Line:
    id: str
    i: str
    j: str
    r: float
    x: float
    f_max: float
    switch: Switch | None = None

    @property
    def switchable(self) -> bool:
        return self.switch is not None

    @property
    def is_tie(self) -> bool:
        return self.switch is not None and self.switch.kind == TIE

    @property
    def base_closed(self) -> bool:
        return self.switch is None or self.switch.normally_closed

    def other(self, node: str) -> str:
        return self.j if node == self.i else self.i


@dataclass(frozen=True)
class LoadPoint:
    node: str
    p: tuple[float, ...]
    q: tuple[float, ...]
    importance: float = 1.0
    breaker: bool = True
    breaker_time_min: float = REMOTE_SWITCH_MIN


@dataclass(frozen=True)
class DG:
    id: str
    node: str
    kind: str
    p_max: float
    s_max: float
    profile: tuple[float, ...] | None = None

    @property
    def dispatchable(self) -> bool:
        return self.kind == DISPATCHABLE


@dataclass(frozen=True)
class TimeGrid:
    count: int
    step_hours: float = 1.0
    start: str = "09:00"

    def label(self, t: int) -> str:
        h, m = (int(v) for v in self.start.split(":"))
        minutes = h * 60 + m + round(t * self.step_hours * 60)
        return f"{(minutes // 60) % 24:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    loads: tuple[LoadPoint, ...]
    dgs: tuple[DG, ...]
    time_grid: TimeGrid
    v_min: float = 0.917
    v_max: float = 1.05
    base_mva: float = 1.0
    base_kv: float = 11.4
    slack_voltage: float = 1.0
    name: str = ""

    def __post_init__(self):
        _check_network(self)

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def node_order(self) -> dict[str, int]:
        return {n: k for k, n in enumerate(self.node_ids)}

    @cached_property
    def line_by_id(self) -> dict[str, Line]:
        return {ln.id: ln for ln in self.lines}

    @cached_property
    def line_order(self) -> dict[str, int]:
        return {ln.id: k for k, ln in enumerate(self.lines)}

    @cached_property
    def substations(self) -> frozenset[str]:
        return frozenset(n.id for n in self.nodes if n.substation)

    @cached_property
    def load_at(self) -> dict[str, LoadPoint]:
        return {ld.node: ld for ld in self.loads}

    @cached_property
    def dgs_at(self) -> dict[str, tuple[DG, ...]]:
        out: dict[str, list[DG]] = {}
        for g in self.dgs:
            out.setdefault(g.node, []).append(g)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def incident(self) -> dict[str, tuple[Line, ...]]:
        out: dict[str, list[Line]] = {n: [] for n in self.node_ids}
        for ln in self.lines:
            out[ln.i].append(ln)
            out[ln.j].append(ln)
        return {k: tuple(v) for k, v in out.items()}

    @property
    def T(self) -> int:
        return self.time_grid.count

    @property
    def dt(self) -> float:
        return self.time_grid.step_hours

    def current_base_amps(self) -> float:
        """Base current in amperes for the three-phase base power and line voltage."""
        return self.base_mva * 1e6 / (math.sqrt(3.0) * self.base_kv * 1e3)


@dataclass(frozen=True)
class FaultScenario:
    faulted_elements: tuple[str, ...]
    isolation_openings: tuple[str, ...]
    start_step: int = 0
    count: int | None = None
    name: str = ""

    def steps(self, net: Network) -> range:
        """Time-step indices of the restorative period."""
        n = self.count if self.count is not None else net.T - self.start_step
        return range(self.start_step, self.start_step + n)


class _UnionFind:
    def __init__(self, items):
        self.parent = {k: k for k in items}

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _check_network(net: Network) -> None:
    seen: set[str] = set()
    for n in net.nodes:
        if n.id in seen:
            raise NetworkError("duplicate node", n.id)
        seen.add(n.id)
    if not net.v_min < net.v_max:
        raise NetworkError("v_min must be below v_max")
    line_ids: set[str] = set()
    for ln in net.lines:
        if ln.id in line_ids:
            raise NetworkError("duplicate line", ln.id)
        line_ids.add(ln.id)
        for end in (ln.i, ln.j):
            if end not in seen:
                raise NetworkError("dangling reference in line", f"{ln.id} -> {end}")
        if ln.i == ln.j:
            raise NetworkError("self-loop line", ln.id)
        if ln.r < 0 or ln.x < 0 or not ln.f_max > 0:
            raise NetworkError("invalid line parameters", ln.id)
        if ln.switch is not None and not ln.switch.op_time_min > 0:
            raise NetworkError("switch operation time must be positive", ln.switch.id)
    T = net.time_grid.count
    load_nodes: set[str] = set()
    for ld in net.loads:
        if ld.node not in seen:
            raise NetworkError("dangling reference in load", ld.node)
        if ld.node in load_nodes:
            raise NetworkError("duplicate load", ld.node)
        load_nodes.add(ld.node)
        if len(ld.p) != T or len(ld.q) != T:
            raise NetworkError("load profile length differs from time grid", ld.node)
        if min(ld.p) < 0:
            raise NetworkError("negative active demand", ld.node)
        if ld.importance < 1:
            raise NetworkError("importance factor below 1", ld.node)
        if not ld.breaker_time_min > 0:
            raise NetworkError("breaker operation time must be positive", ld.node)
    dg_ids: set[str] = set()
    for g in net.dgs:
        if g.id in dg_ids:
            raise NetworkError("duplicate dg", g.id)
        dg_ids.add(g.id)
        if g.node not in seen:
            raise NetworkError("dangling reference in dg", f"{g.id} -> {g.node}")
        if not 0 < g.p_max <= g.s_max:
            raise NetworkError("dg caps must satisfy 0 < p_max <= s_max", g.id)
        if not g.dispatchable:
            if g.profile is None or len(g.profile) != T:
                raise NetworkError("non-dispatchable dg needs a profile per time step", g.id)
            if min(g.profile) < 0 or max(g.profile) > g.p_max + 1e-12:
                raise NetworkError("dg profile outside [0, p_max]", g.id)
    if not net.substations:
        raise NetworkError("network has no substation")
    # radial base: closed lines form a forest with one substation per tree
    uf = _UnionFind(net.node_ids)
    for ln in net.lines:
        if ln.base_closed and not uf.union(ln.i, ln.j):
            raise NetworkError("non-radial base", ln.id)
    roots: dict[str, str] = {}
    for s in sorted(net.substations, key=net.node_order.get):
        r = uf.find(s)
        if r in roots:
            raise NetworkError("non-radial base: substations joined by closed lines",
                               f"{roots[r]}, {s}")
        roots[r] = s
    for n in net.node_ids:
        if uf.find(n) not in roots:
            raise NetworkError("non-radial base: node not fed by a substation", n)


def _schema(name: str) -> dict:
    text = resources.files("gridrestore").joinpath("schemas", name).read_text()
    return json.loads(text)


def _validate(doc: Any, schema_name: str) -> None:
    try:
        jsonschema.validate(doc, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise NetworkError(f"schema violation: {exc.message}", where) from None


def _read(document: Mapping | str | Path) -> Any:
    if isinstance(document, (str, Path)):
        with open(document) as fh:
            return json.load(fh)
    return document


def load_network(document: Mapping | str | Path) -> Network:
    """Build a :class:`Network` from a parsed JSON document or a file path."""
    doc = _read(document)
    _validate(doc, "network.schema.json")
    tg = doc["time_grid"]
    grid = TimeGrid(count=int(tg["count"]), step_hours=float(tg.get("step_hours", 1.0)),
                    start=str(tg.get("start", "09:00")))
    switches: dict[str, Switch] = {}
    for s in doc["switches"]:
        sid = str(s["id"])
        if sid in switches:
            raise NetworkError("duplicate switch", sid)
        act = s.get("actuation", MANUAL)
        default = MANUAL_SWITCH_MIN if act == MANUAL else REMOTE_SWITCH_MIN
        switches[sid] = Switch(sid, s["kind"], act, float(s.get("op_time_min", default)))
    used: set[str] = set()
    lines = []
    for ln in doc["lines"]:
        sw = ln.get("switch")
        swobj = None
        if sw is not None:
            sw = str(sw)
            if sw not in switches:
                raise NetworkError("dangling reference to switch", f"{ln['id']} -> {sw}")
            if sw in used:
                raise NetworkError("switch attached to more than one line", sw)
            used.add(sw)
            swobj = switches[sw]
        lines.append(Line(str(ln["id"]), str(ln["from"]), str(ln["to"]), float(ln["r"]),
                          float(ln["x"]), float(ln["f_max"]), swobj))
    loads = []
    for ld in doc["loads"]:
        p = tuple(float(v) for v in ld["p"])
        q = tuple(float(v) for v in ld.get("q", [0.0] * len(p)))
        loads.append(LoadPoint(str(ld["node"]), p, q, float(ld.get("importance", 1.0)),
                               bool(ld.get("breaker", True)),
                               float(ld.get("breaker_time_min", REMOTE_SWITCH_MIN))))
    dgs = []
    for g in doc["dgs"]:
        prof = g.get("profile")
        dgs.append(DG(str(g["id"]), str(g["node"]), g["kind"], float(g["p_max"]),
                      float(g["s_max"]), None if prof is None else tuple(float(v) for v in prof)))
    vl = doc["v_limits"]
    return Network(
        nodes=tuple(Node(str(n["id"]), bool(n.get("substation", False))) for n in doc["nodes"]),
        lines=tuple(lines), loads=tuple(loads), dgs=tuple(dgs), time_grid=grid,
        v_min=float(vl["min"]), v_max=float(vl["max"]), base_mva=float(doc["base_mva"]),
        base_kv=float(doc.get("base_kv", 11.4)),
        slack_voltage=float(doc.get("slack_voltage", 1.0)), name=str(doc.get("name", "")))


def load_scenario(document: Mapping | str | Path, net: Network | None = None) -> FaultScenario:
    """Build a :class:`FaultScenario`; with ``net`` given, element ids are checked."""
    doc = _read(document)
    _validate(doc, "scenario.schema.json")
    rp = doc.get("restorative_period", {})
    sc = FaultScenario(tuple(str(e) for e in doc["faulted_elements"]),
                       tuple(str(e) for e in doc["isolation_openings"]),
                       int(rp.get("start_step", 0)), rp.get("count"), str(doc.get("name", "")))
    if net is not None:
        check_scenario(net, sc)
    return sc


def check_scenario(net: Network, fault: FaultScenario) -> None:
    for e in fault.faulted_elements:
        if e not in net.line_by_id and e not in net.node_order:
            raise NetworkError("fault references unknown element", e)
        if e in net.node_order and e not in net.substations:
            raise NetworkError("faulted node must be a substation", e)
    for e in fault.isolation_openings:
        if e not in net.line_by_id:
            raise NetworkError("isolation opening references unknown line", e)
    end = fault.start_step + (fault.count if fault.count is not None else net.T - fault.start_step)
    if fault.start_step >= net.T or end > net.T or end <= fault.start_step:
        raise NetworkError("restorative period outside the time grid")


def network_to_dict(net: Network) -> dict:
    """Inverse of :func:`load_network` (used for fixtures and round trips)."""
    switches = [dict(id=ln.switch.id, kind=ln.switch.kind, actuation=ln.switch.actuation,
                     op_time_min=ln.switch.op_time_min) for ln in net.lines if ln.switch]
    return {
        "schema_version": SCHEMA_VERSION, "name": net.name, "base_mva": net.base_mva,
        "base_kv": net.base_kv, "slack_voltage": net.slack_voltage,
        "v_limits": {"min": net.v_min, "max": net.v_max},
        "time_grid": {"start": net.time_grid.start, "step_hours": net.time_grid.step_hours,
                      "count": net.time_grid.count},
        "nodes": [{"id": n.id, "substation": n.substation} for n in net.nodes],
        "lines": [{"id": ln.id, "from": ln.i, "to": ln.j, "r": ln.r, "x": ln.x, "f_max": ln.f_max,
                   "switch": ln.switch.id if ln.switch else None} for ln in net.lines],
        "switches": switches,
        "dgs": [dict(id=g.id, node=g.node, kind=g.kind, p_max=g.p_max, s_max=g.s_max,
                     **({"profile": list(g.profile)} if g.profile is not None else {}))
                for g in net.dgs],
        "loads": [dict(node=ld.node, importance=ld.importance, breaker=ld.breaker,
                       breaker_time_min=ld.breaker_time_min, p=list(ld.p), q=list(ld.q))
                  for ld in net.loads],
    }
