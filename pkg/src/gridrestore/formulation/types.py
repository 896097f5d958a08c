"""Parameter records and the entity-to-variable map shared by the model builders."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from ..conic.model import LinExpr, Var
from ..network import Network
from ..topology import OffOutageArea

Expr = Union[Var, LinExpr, float]

WEIGHTED = "weighted"
LEXICOGRAPHIC = "lexicographic"


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of energy not supplied, switching time (hours) and losses."""

    w_re: float = 1e4
    w_sw: float = 1e2
    w_op: float = 1.0
    mode: str = WEIGHTED

    def __post_init__(self):
        if self.mode not in (WEIGHTED, LEXICOGRAPHIC):
            raise ValueError(f"unknown objective mode {self.mode!r}")
        if min(self.w_re, self.w_sw, self.w_op) <= 0:
            raise ValueError("objective weights must be positive")
        if self.mode == WEIGHTED and not self.w_re > self.w_sw > self.w_op:
            raise ValueError("weighted mode needs w_re > w_sw > w_op > 0")

    @classmethod
    def parse(cls, text: str, mode: str = WEIGHTED) -> "ObjectiveWeights":
        parts = [float(v) for v in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be given as w_re,w_sw,w_op")
        return cls(*parts, mode=mode)


@dataclass(frozen=True)
class BigMPolicy:
    m_flow: float
    m_volt: float
    m_pq: dict[str, float]
    m_1: float
    m_2: float

    @classmethod
    def derive(cls, net: Network, area: OffOutageArea, u_cap: float | None = None) -> "BigMPolicy":
        """Smallest constants that keep every deactivated row slack.

        With a line open one end may be dead (U = 0) while the other sits at
        the top of the band, so the voltage constant must cover ``u_cap``.
        """
        n_sw = max(1, len(area.switchable))
        u_top = net.v_max ** 2 if u_cap is None else u_cap
        m_pq = {ln.id: ln.f_max * net.v_max for ln in net.lines}
        return cls(float(max(1, len(area.nodes))), u_top, m_pq, float(n_sw), 2.0 * n_sw)

    def check(self, net: Network, area: OffOutageArea) -> None:
        safe = BigMPolicy.derive(net, area)
        if self.m_flow < safe.m_flow or self.m_volt < safe.m_volt or \
                self.m_1 < 1 or self.m_2 < 1:
            raise ValueError("big-M constants below the instance-derived safe values")
        for k, v in safe.m_pq.items():
            if self.m_pq.get(k, 0.0) < v:
                raise ValueError(f"power big-M below safe value on line {k}")


@dataclass(frozen=True)
class DistFlowRelaxation:
    """Limits of the lossless linear power flow used by the master problem."""

    s_bar: dict[str, float]
    h_bar: dict[str, float]
    u_min: float
    u_max: float
    sides: int = 8

    @classmethod
    def derive(cls, net: Network, area: OffOutageArea, factor: float = 1.05,
               sides: int = 8) -> "DistFlowRelaxation":
        """Relaxed limits that contain every lossy feasible point.

        A lossless flow equals the lossy flow minus the (nonnegative)
        downstream losses, so it is never larger. It can only exceed the
        lossy magnitude ``v_max * f_max`` by running backwards, which needs
        generation: its components are then bounded by the total DG
        capability in scope. The loss-based alternative bounds the gap by
        the sum over scope lines of z * f_max^2; the smaller bound is used.
        """
        scope = set(area.lines) | set(area.scope_lines)
        lines = [net.line_by_id[l] for l in scope]
        loss_p = sum(ln.r * ln.f_max ** 2 for ln in lines)
        loss_q = sum(ln.x * ln.f_max ** 2 for ln in lines)
        slack = math.hypot(loss_p, loss_q)
        nodes = set(area.nodes) | set(area.scope_nodes)
        gen_p = gen_q = 0.0
        for n in nodes:
            for g in net.dgs_at.get(n, ()):
                gen_p += g.p_max if g.dispatchable else max(g.profile)
                gen_q += g.s_max if g.dispatchable else 0.0
        demand_ok = all(min(ld.p) >= 0 and min(ld.q) >= 0 for ld in net.loads if ld.node in nodes)
        s_bar = {}
        for ln in net.lines:
            s = net.v_max * ln.f_max
            bound = s + slack
            if demand_ok:
                bound = min(bound, math.sqrt(s * s + gen_p ** 2 + gen_q ** 2))
            s_bar[ln.id] = max(factor * s, bound)
        h_bar = {g.id: factor * g.s_max for g in net.dgs}
        # lossless voltages dominate lossy ones, so only the floor is kept tight
        drop = sum(2.0 * (ln.r + ln.x) * s_bar[ln.id] for ln in lines)
        u_max = max(net.v_max ** 2, net.slack_voltage ** 2 + drop)
        return cls(s_bar, h_bar, net.v_min ** 2, u_max, sides)

    def check(self, net: Network) -> None:
        if self.sides < 3:
            raise ValueError("polygon needs at least 3 sides")
        if self.u_min > net.v_min ** 2 or self.u_max < net.v_max ** 2:
            raise ValueError("relaxed voltage band must contain the physical band")
        for ln in net.lines:
            if self.s_bar[ln.id] < ln.f_max:
                raise ValueError(f"relaxed ampacity below f_max on {ln.id}")
        for g in net.dgs:
            if self.h_bar[g.id] < g.s_max:
                raise ValueError(f"relaxed DG limit below s_max on {g.id}")


@dataclass
class VariableAtlas:
    """Map from network entities to model variables (or constants when fixed).

    Keys: ``mu[line]``, ``beta[(line, d)]`` and ``psi[(line, d)]`` with d = 0
    for the i -> j direction, ``phi[node]``, ``alpha[(node, t)]``,
    ``U[(node, t)]``, ``F``/``p``/``q[(line, t)]``, ``P_inj``/``Q_inj[(dg, t)]``,
    ``P_sub``/``Q_sub[(substation, t)]`` and the cut binaries ``psi_cut``.
    """

    mu: dict[str, Expr] = field(default_factory=dict)
    beta: dict[tuple[str, int], Expr] = field(default_factory=dict)
    psi: dict[tuple[str, int], Expr] = field(default_factory=dict)
    phi: dict[str, Expr] = field(default_factory=dict)
    alpha: dict[tuple[str, int], Expr] = field(default_factory=dict)
    U: dict[tuple[str, int], Expr] = field(default_factory=dict)
    F: dict[tuple[str, int], Expr] = field(default_factory=dict)
    p: dict[tuple[str, int], Expr] = field(default_factory=dict)
    q: dict[tuple[str, int], Expr] = field(default_factory=dict)
    P_inj: dict[tuple[str, int], Expr] = field(default_factory=dict)
    Q_inj: dict[tuple[str, int], Expr] = field(default_factory=dict)
    P_sub: dict[tuple[str, int], Expr] = field(default_factory=dict)
    Q_sub: dict[tuple[str, int], Expr] = field(default_factory=dict)
    psi_cut: list[Var] = field(default_factory=list)

    TABLES = ("mu", "beta", "psi", "phi", "alpha", "U", "F", "p", "q", "P_inj", "Q_inj",
              "P_sub", "Q_sub")

    def variable_ids(self) -> list[int]:
        """Indices of every model variable referenced by the atlas."""
        out = []
        for name in self.TABLES:
            for v in getattr(self, name).values():
                out.extend(_ids(v))
        out.extend(v.index for v in self.psi_cut)
        return out


def _ids(v) -> list[int]:
    if isinstance(v, Var):
        return [v.index]
    if isinstance(v, LinExpr):
        return list(v.terms)
    return []


def value(expr: Expr, x) -> float:
    """Evaluate an atlas entry at a solution vector."""
    if isinstance(expr, Var):
        return float(x[expr.index])
    if isinstance(expr, LinExpr):
        return expr.value(x)
    return float(expr)
