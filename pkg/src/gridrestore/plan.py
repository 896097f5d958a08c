"""Restoration plans: ordered switching actions, pickup schedule and set points."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .network import Network
from .topology import Configuration, OffOutageArea, closed_lines

LINE = "line"
BREAKER = "breaker"
OPEN = "open"
CLOSE = "close"


@dataclass(frozen=True)
class Action:
    element: str
    kind: str      # line | breaker
    op: str        # open | close
    stage: int
    time_step: int | None = None

    def describe(self) -> str:
        at = "" if self.time_step is None else f" at t={self.time_step}"
        return f"{self.op} {self.kind} {self.element}{at}"


def switching_minutes(actions: Iterable[Action], op_time: Callable[[Action], float]) -> float:
    """Total operation time of an action list.

    Line switches count every operation. A load breaker counts once per node
    even when it is opened and later reclosed.
    """
    total = 0.0
    breakers: set[str] = set()
    for a in actions:
        if a.kind == BREAKER:
            if a.element in breakers:
                continue
            breakers.add(a.element)
        total += op_time(a)
    return total


def network_op_time(net: Network) -> Callable[[Action], float]:
    def op_time(a: Action) -> float:
        if a.kind == BREAKER:
            return net.load_at[a.element].breaker_time_min
        return net.line_by_id[a.element].switch.op_time_min
    return op_time


@dataclass
class RestorationPlan:
    method: str
    status: str
    config: dict[str, int]
    actions: list[Action]
    pickup: dict[str, list[int]]
    dg_setpoints: dict[str, list[list[float]]]
    steps: list[int]
    objective: dict[str, float] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def configuration(self, area: OffOutageArea) -> Configuration:
        return Configuration.of(area, self.config)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actions"] = [asdict(a) for a in self.actions]
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: Mapping) -> "RestorationPlan":
        return cls(d["method"], d["status"], {k: int(v) for k, v in d["config"].items()},
                   [Action(**a) for a in d["actions"]],
                   {k: [int(v) for v in vs] for k, vs in d["pickup"].items()},
                   {k: [list(map(float, pq)) for pq in vs] for k, vs in d["dg_setpoints"].items()},
                   list(d["steps"]), dict(d.get("objective", {})), dict(d.get("info", {})))

    @classmethod
    def load(cls, path: str | Path) -> "RestorationPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def table(self) -> str:
        stages: dict[int, list[str]] = {}
        for a in self.actions:
            stages.setdefault(a.stage, []).append(a.describe())
        lines = [f"stage {s}: " + "; ".join(v) for s, v in sorted(stages.items())]
        return "\n".join(lines)


def order_actions(area: OffOutageArea, config: Configuration,
                  pickup: Mapping[str, list[int]], steps: list[int]) -> list[Action]:
    """Heuristic action order.

    Stage 1 opens sectionalizers and the breakers of loads rejected at the
    first step. Stage 2 closes ties in breadth-first order from the healthy
    side, so each closing energizes a tree hanging from a live node. Later
    stages reclose breakers at their pickup step.
    """
    net = area.net
    y = config.as_dict()
    acts: list[Action] = []
    for l in area.switchable:
        if not net.line_by_id[l].is_tie and not y[l]:
            acts.append(Action(l, LINE, OPEN, 1))
    energized = _bfs_energized(area, config)
    for n in area.nodes:
        ld = net.load_at.get(n)
        if ld is None or not ld.breaker or n not in energized:
            continue
        if not pickup[n][0]:
            acts.append(Action(n, BREAKER, OPEN, 1))
    ties = [l for l in area.switchable if net.line_by_id[l].is_tie and y[l]]
    rank = _bfs_rank(area, config)
    for l in sorted(ties, key=lambda l: (rank.get(l, len(rank)), net.line_order[l])):
        acts.append(Action(l, LINE, CLOSE, 2))
    stage = 3
    for k, t in enumerate(steps[1:], start=1):
        picked = [n for n in area.nodes if n in pickup and pickup[n][k] and not pickup[n][k - 1]
                  and net.load_at[n].breaker]
        if picked:
            acts.extend(Action(n, BREAKER, CLOSE, stage, t) for n in picked)
            stage += 1
    return acts


def _bfs_order(area: OffOutageArea, config: Configuration):
    net = area.net
    lines = closed_lines(area, config)
    adj: dict[str, list] = {}
    for ln in lines:
        adj.setdefault(ln.i, []).append(ln)
        adj.setdefault(ln.j, []).append(ln)
    roots = [n for n in area.scope_nodes if n in net.substations]
    seen = set(roots)
    todo = deque(roots)
    order: list[tuple[str, str]] = []
    while todo:
        a = todo.popleft()
        for ln in adj.get(a, ()):
            b = ln.other(a)
            if b not in seen:
                seen.add(b)
                order.append((b, ln.id))
                todo.append(b)
    return seen, order


def _bfs_energized(area, config) -> set[str]:
    return _bfs_order(area, config)[0]


def _bfs_rank(area, config) -> dict[str, int]:
    return {lid: k for k, (_, lid) in enumerate(_bfs_order(area, config)[1])}
