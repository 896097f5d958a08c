"""Best-bound branch-and-bound over conic relaxations."""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ipm
from .model import ConicModel

logger = logging.getLogger(__name__)


class RelaxationError(RuntimeError):
    """The root relaxation could not be solved."""


@dataclass
class MipSettings:
    # relative gap |incumbent - bound| / max(1, |incumbent|)
    mip_gap_tol: float = 1e-10
    int_tol: float = 1e-6
    # absorbs interior-point accuracy when comparing bounds to the incumbent
    prune_tol: float = 1e-9
    node_limit: int = 100_000
    time_limit: float = math.inf


@dataclass
class MipResult:
    status: str
    x: np.ndarray | None = None
    objective: float = math.inf
    best_bound: float = -math.inf
    nodes: int = 0
    wall_time: float = 0.0
    history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    @property
    def gap(self) -> float:
        """Absolute gap incumbent - best bound (inf without incumbent)."""
        if self.x is None:
            return math.inf
        return self.objective - self.best_bound

    @property
    def rel_gap(self) -> float:
        if self.x is None:
            return math.inf
        return self.gap / max(1.0, abs(self.objective))


def _most_fractional(x: np.ndarray, binaries: np.ndarray, tol: float) -> int | None:
    if binaries.size == 0:
        return None
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    j = int(np.argmax(frac))  # argmax returns the first maximum -> smallest id
    if frac[j] <= tol:
        return None
    return int(binaries[j])


def solve_mip(model: ConicModel, settings: MipSettings | None = None,
              ipm_settings: ipm.IPMSettings | None = None,
              start: np.ndarray | None = None, cutoff: float = math.inf) -> MipResult:
    """Minimise ``model`` with its binaries enforced.

    ``start`` optionally gives a binary assignment (full vector; only the
    binary entries are read) used to seed the incumbent. Nodes whose bound
    reaches ``cutoff`` are discarded; when nothing below it exists the
    status is ``"cutoff"`` and ``best_bound`` equals ``cutoff``.
    """
    st = settings or MipSettings()
    t0 = time.perf_counter()
    model.check()
    lb0, ub0 = model.bounds()
    binaries = np.array(model.binaries(), dtype=int)
    res = MipResult("infeasible")
    counter = 0

    def eps(inc: float) -> float:
        return max(st.mip_gap_tol, st.prune_tol) * max(1.0, abs(inc))

    def polish(x_relax: np.ndarray, lb, ub):
        lbf, ubf = lb.copy(), ub.copy()
        vals = np.round(x_relax[binaries])
        lbf[binaries] = vals
        ubf[binaries] = vals
        r = ipm.solve_continuous(model, ipm_settings, lbf, ubf)
        if r.ok:
            x = r.x.copy()
            x[binaries] = vals
            return x, r.objective
        return None, math.inf

    if start is not None and binaries.size:
        x, obj = polish(np.asarray(start, float), lb0, ub0)
        if x is not None:
            res.x, res.objective = x, obj

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = [(-math.inf, 0, lb0, ub0)]
    nodes = 0
    status = None
    pruned_floor = math.inf
    cut_off = False
    while heap:
        elapsed = time.perf_counter() - t0
        if elapsed > st.time_limit:
            status = "time-limit"
            break
        if nodes >= st.node_limit:
            status = "node-limit"
            break
        bound, _, lb, ub = heapq.heappop(heap)
        if res.x is not None and bound >= res.objective - eps(res.objective):
            pruned_floor = min(pruned_floor, bound)
            continue
        if bound >= cutoff:
            cut_off = True
            continue
        nodes += 1
        r = ipm.solve_continuous(model, ipm_settings, lb, ub)
        if r.status == ipm.INFEASIBLE:
            continue
        if r.status == ipm.UNBOUNDED:
            if nodes == 1:
                res.status = "unbounded"
                res.nodes = nodes
                res.wall_time = time.perf_counter() - t0
                return res
            logger.warning("unbounded relaxation at node %d pruned", nodes)
            continue
        if not r.ok:
            worst = max(r.residuals.values()) if r.residuals else math.inf
            if nodes == 1 and worst > 1e-5:
                raise RelaxationError(
                    f"root relaxation failed ({r.status}); last residuals {r.residuals}; "
                    f"trace tail {r.trace[-3:]}")
            if worst > 1e-5:
                logger.warning("relaxation at node %d inaccurate (%s), pruned", nodes, r.status)
                continue
        node_bound = max(bound, min(r.objective, r.dual_objective) if r.ok else r.objective)
        if res.x is not None and node_bound >= res.objective - eps(res.objective):
            pruned_floor = min(pruned_floor, node_bound)
            continue
        if node_bound >= cutoff:
            cut_off = True
            continue
        j = _most_fractional(r.x, binaries, st.int_tol)
        if j is None:
            x, obj = polish(r.x, lb, ub)
            if x is None and _most_fractional(r.x, binaries, 1e-12) is None and r.ok:
                # already integral: the relaxation point itself is feasible
                logger.info("node %d polishing failed, keeping the integral relaxation", nodes)
                x, obj = r.x.copy(), r.objective
            if x is not None:
                if obj >= cutoff:
                    cut_off = True
                elif obj < res.objective:
                    res.x, res.objective = x, obj
                    res.history.append((time.perf_counter() - t0, obj,
                                        _open_bound(heap, node_bound)))
                continue
            # the rounded point is infeasible; the subtree may still hold
            # other integer points, so branch on the residual fraction
            j = _most_fractional(r.x, binaries, 1e-12)
            if j is None:
                logger.warning("integral relaxation at node %d failed polishing", nodes)
                continue
        for v in (0.0, 1.0):
            lbc, ubc = lb.copy(), ub.copy()
            lbc[j] = ubc[j] = v
            counter += 1
            heapq.heappush(heap, (node_bound, counter, lbc, ubc))
        if nodes % 50 == 0:
            logger.debug("node %d open %d incumbent %.6g bound %.6g", nodes, len(heap),
                         res.objective, heap[0][0])

    res.nodes = nodes
    res.wall_time = time.perf_counter() - t0
    if status is None:
        # tree exhausted
        if res.x is None:
            res.status = "cutoff" if cut_off else "infeasible"
            res.best_bound = cutoff if cut_off else math.inf
        else:
            res.status = "optimal"
            res.best_bound = min(res.objective, pruned_floor)
        return res
    res.status = status
    open_bound = min((b for b, *_ in heap), default=math.inf)
    res.best_bound = min(open_bound, res.objective, pruned_floor, cutoff if cut_off else math.inf)
    return res


def _open_bound(heap, current: float) -> float:
    return min([current] + [b for b, *_ in heap])
