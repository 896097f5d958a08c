"""Exact objective arithmetic for fixed configurations and pickup schedules."""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

from .formulation.types import ObjectiveWeights
from .network import Network
from .topology import Configuration, OffOutageArea


def line_switch_minutes(area: OffOutageArea, config: Configuration) -> float:
    """Operation time of the line switches that differ from their normal state."""
    net = area.net
    total = 0.0
    for l, s in config.status:
        ln = net.line_by_id[l]
        if ln.is_tie == bool(s):
            total += ln.switch.op_time_min
    return total


def node_costs(net: Network, nodes: Iterable[str], pickup: Mapping[str, Sequence[int]],
               energized: Iterable[str], steps: Sequence[int]) -> tuple[float, float]:
    """(energy not supplied, breaker minutes) for ``nodes``; dead nodes have all-zero pickup."""
    live = set(energized)
    ens = []
    brk = 0.0
    for n in nodes:
        ld = net.load_at.get(n)
        if ld is None:
            continue
        a = pickup.get(n, [0] * len(steps))
        for k, t in enumerate(steps):
            if not a[k]:
                ens.append(ld.importance * ld.p[t] * net.dt)
        if ld.breaker and n in live and not a[0]:
            brk += ld.breaker_time_min
    return math.fsum(ens), brk


def restoration_value(ens: float, sw_minutes: float, weights: ObjectiveWeights) -> float:
    return weights.w_re * ens + weights.w_sw * sw_minutes / 60.0


def dead_node_cost(area: OffOutageArea, energized: Iterable[str], steps: Sequence[int],
                   weights: ObjectiveWeights) -> float:
    live = set(energized)
    dead = [n for n in area.nodes if n not in live]
    ens, _ = node_costs(area.net, dead, {}, (), steps)
    return weights.w_re * ens
