"""Cluster cuts for the master problem."""
from __future__ import annotations

from dataclasses import dataclass

from ..conic.model import Constraint, Var, quicksum
from ..topology import Cluster, Configuration
from .encoders import encode_conditional, encode_either_or, node_restoration_terms
from .types import BigMPolicy

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"

# "exact": the antecedent is "every switchable line touching the cluster keeps
# its state", which reproduces the same cluster and is therefore sound.
# "cardinality": tree-count and no-new-source conditions over the same line set.
EXACT = "exact"
CARDINALITY = "cardinality"


@dataclass(frozen=True)
class CutRecord:
    kind: str
    nodes: tuple[str, ...]
    lines: tuple[str, ...]
    sources: tuple[str, ...]
    config: tuple[tuple[str, int], ...]
    iteration: int
    bound: float | None = None
    style: str = EXACT

    def __post_init__(self):
        if self.kind == OPTIMALITY and (self.bound is None or not self.bound < float("inf")):
            raise ValueError("optimality cuts need a finite bound")

    @classmethod
    def of(cls, kind: str, cluster: Cluster, config: Configuration, iteration: int,
           bound: float | None = None, style: str = EXACT) -> "CutRecord":
        return cls(kind, cluster.nodes, cluster.lines, cluster.sources, config.status,
                   iteration, bound, style)

    def split(self) -> tuple[list[str], list[str]]:
        """Lines of the cut that were closed / open in the originating configuration."""
        y = dict(self.config)
        return ([l for l in self.lines if y[l]], [l for l in self.lines if not y[l]])

    def antecedent_holds(self, config: Configuration) -> bool:
        """Whether ``config`` lies in the set the cut reasons about."""
        y0 = dict(self.config)
        y = config.as_dict()
        if self.style == EXACT:
            return all(y[l] == y0[l] for l in self.lines)
        return (sum(y[l] for l in self.lines) == len(self.nodes) - 1
                and all(y[l] <= y0[l] for l in self.lines))


def _complements(cut: CutRecord, mu: dict) -> tuple[Constraint, Constraint]:
    closed, opened = cut.split()
    if cut.style == EXACT:
        a = quicksum(mu[l] for l in closed) <= len(closed) - 1
        b = quicksum(mu[l] for l in opened) >= 1
    else:
        s = quicksum(mu[l] for l in cut.lines)
        a = s <= len(cut.nodes) - 2
        b = s >= 1 + len(closed)
    return a, b


def encode_cut(bundle, cut: CutRecord, policy: BigMPolicy,
               strengthen: bool = True) -> tuple[list[Constraint], list[Var]]:
    """Add ``cut`` to a master bundle; returns the rows and auxiliary binaries.

    With ``strengthen`` (exact style only) the disjunctive encoding is
    accompanied by its linear no-good form: with ``d`` the number of lines
    of the cut whose state differs from ``y^(k)``, feasibility cuts add
    ``d >= 1`` and optimality cuts add ``lhs >= L_v * (1 - d)``. Both rows
    hold at every binary point that satisfies the disjunction, so the
    integer feasible set is unchanged while the relaxation gets tighter.
    """
    model, atlas = bundle.model, bundle.atlas
    a, b = _complements(cut, atlas.mu)
    name = f"cut{len(bundle.cuts)}"
    m_1, m_2 = policy.m_1, policy.m_2
    if cut.style == CARDINALITY:
        # the cardinality rows can be violated by up to |lines|
        m_1 = m_2 = max(policy.m_2, 2.0 * len(cut.lines) + len(cut.nodes))
        policy = BigMPolicy(policy.m_flow, policy.m_volt, policy.m_pq, m_1, m_2)
    if cut.kind == FEASIBILITY:
        rows, psi = encode_either_or(model, a, b, m_1, m_2, name)
        binaries = [psi]
    else:
        ens, brk = node_restoration_terms(atlas, bundle.net, cut.nodes, bundle.steps)
        w = bundle.terms.weights
        lhs = ens * w.w_re + brk * (w.w_sw / 60.0)
        rows, binaries = encode_conditional(model, [a, b], lhs >= cut.bound, policy,
                                            max(cut.bound, 1.0), name)
    rows = list(rows)
    if strengthen and cut.style == EXACT:
        closed, opened = cut.split()
        d = quicksum(1 - atlas.mu[l] for l in closed) + quicksum(atlas.mu[l] for l in opened)
        if cut.kind == FEASIBILITY:
            rows.append(model.add_row(d >= 1, f"{name}:nogood"))
        else:
            rows.append(model.add_row(lhs + d * cut.bound >= cut.bound, f"{name}:nogood"))
    atlas.psi_cut.extend(binaries)
    bundle.cuts.append(cut)
    return rows, binaries
