"""Algebraic modelling layer for mixed-integer conic programs.

A :class:`ConicModel` holds continuous and binary variables, linear rows and
second-order cone blocks, and a linear objective that is always minimised.
Expressions are built with ordinary arithmetic on :class:`Var` and
:class:`LinExpr` objects::

    m = ConicModel()
    x = m.add_var("x", lb=0)
    y = m.add_var("y", lb=0)
    m.add_row(x + 2 * y >= 3)
    m.add_cone(x + 1, [x - y, 2 * y])
    m.minimize(x + y)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

CONTINUOUS = "continuous"
BINARY = "binary"


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


class LinExpr:
    """Affine expression ``sum(coef * var) + const`` over variable indices."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(value) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Var):
            return LinExpr({value.index: 1.0})
        if isinstance(value, (int, float, np.floating, np.integer)):
            return LinExpr(const=float(value))
        raise TypeError(f"cannot build an expression from {type(value).__name__}")

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def _iadd(self, other, scale: float = 1.0) -> "LinExpr":
        other = LinExpr.of(other)
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0.0) + scale * v
        self.const += scale * other.const
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy()._iadd(self, -1.0)

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, np.floating, np.integer)):
            raise TypeError("expressions can only be scaled by numbers")
        s = float(scalar)
        return LinExpr({k: s * v for k, v in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __le__(self, other):
        return Constraint(self - other, "<=")

    def __ge__(self, other):
        return Constraint(self - other, ">=")

    def __eq__(self, other):  # type: ignore[override]
        return Constraint(self - other, "==")

    __hash__ = None  # type: ignore[assignment]

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def __repr__(self) -> str:
        parts = [f"{v:+g}*x{k}" for k, v in sorted(self.terms.items())]
        return " ".join(parts + [f"{self.const:+g}"])


class Var:
    """Handle to a model variable; arithmetic promotes it to :class:`LinExpr`."""

    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name

    def _e(self) -> LinExpr:
        return LinExpr({self.index: 1.0})

    def __add__(self, o):
        return self._e() + o

    __radd__ = __add__

    def __sub__(self, o):
        return self._e() - o

    def __rsub__(self, o):
        return LinExpr.of(o) - self._e()

    def __neg__(self):
        return -self._e()

    def __mul__(self, s):
        return self._e() * s

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self._e() / s

    def __le__(self, o):
        return self._e() <= o

    def __ge__(self, o):
        return self._e() >= o

    def __eq__(self, o):  # type: ignore[override]
        return self._e() == o

    def __hash__(self):
        return hash(("var", self.index))

    def __repr__(self) -> str:
        return f"Var({self.name})"


def quicksum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out._iadd(it)
    return out


@dataclass
class Constraint:
    """Normalised linear row ``expr (sense) 0``."""

    expr: LinExpr
    sense: str
    name: str = ""

    def __bool__(self):
        raise TypeError("constraints have no truth value; pass them to add_row")


@dataclass
class VarInfo:
    name: str
    kind: str
    lb: float
    ub: float


@dataclass
class Cone:
    """``||args|| <= head`` with affine head and arguments."""

    head: LinExpr
    args: list[LinExpr]
    name: str = ""


@dataclass
class ConicModel:
    variables: list[VarInfo] = field(default_factory=list)
    rows: list[Constraint] = field(default_factory=list)
    cones: list[Cone] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    name: str = "model"

    # -- construction -------------------------------------------------------
    def add_var(self, name: str, lb: float = -math.inf, ub: float = math.inf,
                kind: str = CONTINUOUS) -> Var:
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        elif kind != CONTINUOUS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(VarInfo(name, kind, float(lb), float(ub)))
        return Var(len(self.variables) - 1, name)

    def add_binary(self, name: str) -> Var:
        return self.add_var(name, 0.0, 1.0, BINARY)

    def add_row(self, con: Constraint, name: str = "") -> Constraint:
        if not isinstance(con, Constraint):
            raise ModelError("add_row expects a comparison such as `expr <= rhs`")
        self._check_expr(con.expr)
        if name:
            con.name = name
        self.rows.append(con)
        return con

    def add_cone(self, head, args: Iterable, name: str = "") -> Cone:
        head = LinExpr.of(head)
        args = [LinExpr.of(a) for a in args]
        if not args:
            raise ModelError("cone blocks need at least one argument")
        for e in [head, *args]:
            self._check_expr(e)
        cone = Cone(head, args, name)
        self.cones.append(cone)
        return cone

    def minimize(self, expr) -> None:
        expr = LinExpr.of(expr)
        self._check_expr(expr)
        self.objective = expr
        self._objective_version = getattr(self, "_objective_version", 0) + 1

    def _check_expr(self, expr: LinExpr) -> None:
        n = len(self.variables)
        for k in expr.terms:
            if not 0 <= k < n:
                raise ModelError(f"expression references unknown variable x{k}")

    # -- queries ------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def check(self) -> None:
        """Validate the structural invariants; raises :class:`ModelError`."""
        for v in self.variables:
            if v.kind == BINARY and (v.lb < 0 or v.ub > 1):
                raise ModelError(f"binary {v.name} has bounds outside [0, 1]")
        for r in self.rows:
            self._check_expr(r.expr)
            if r.sense not in ("<=", ">=", "=="):
                raise ModelError(f"row {r.name!r} has unknown sense {r.sense!r}")
        for c in self.cones:
            if not c.args:
                raise ModelError(f"cone {c.name!r} is empty")

    def copy(self) -> "ConicModel":
        return ConicModel(
            [VarInfo(v.name, v.kind, v.lb, v.ub) for v in self.variables],
            [Constraint(r.expr.copy(), r.sense, r.name) for r in self.rows],
            [Cone(c.head.copy(), [a.copy() for a in c.args], c.name) for c in self.cones],
            self.objective.copy(),
            self.name,
        )

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        """Check a point against bounds, rows, cones and integrality."""
        x = np.asarray(x, dtype=float)
        lb, ub = self.bounds()
        if np.any(x < lb - tol) or np.any(x > ub + tol):
            return False
        for i in self.binaries():
            if min(abs(x[i]), abs(x[i] - 1.0)) > tol:
                return False
        for r in self.rows:
            v = r.expr.value(x)
            if (r.sense == "<=" and v > tol) or (r.sense == ">=" and v < -tol) or (
                    r.sense == "==" and abs(v) > tol):
                return False
        for c in self.cones:
            if c.head.value(x) - math.hypot(*[a.value(x) for a in c.args]) < -tol:
                return False
        return True

    # -- debug dump ---------------------------------------------------------
    def dump(self) -> str:
        """Deterministic text rendering: one row per line, cones by block."""
        out = [f"model {self.name}", "minimize " + _fmt(self.objective, self.variables)]
        for i, v in enumerate(self.variables):
            out.append(f"var {i} {v.name} {v.kind} [{v.lb!r}, {v.ub!r}]")
        for r in self.rows:
            out.append(f"row {r.name} : {_fmt(r.expr, self.variables)} {r.sense} 0")
        for c in self.cones:
            out.append(f"cone {c.name} : head {_fmt(c.head, self.variables)}")
            for a in c.args:
                out.append(f"    arg {_fmt(a, self.variables)}")
        return "\n".join(out) + "\n"

    # -- standard form ------------------------------------------------------
    def standard_form(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
                      ) -> "StandardForm":
        """Lower to ``min c'x  s.t. Ax = b, Gx + s = h, s in K``.

        Variables with ``lb == ub`` are substituted out. Bounds become
        nonnegative-orthant rows.
        """
        if lb is None or ub is None:
            lb0, ub0 = self.bounds()
            lb = lb0 if lb is None else lb
            ub = ub0 if ub is None else ub
        return StandardForm.build(self, np.asarray(lb, float), np.asarray(ub, float))


def _fmt(e: LinExpr, variables: list[VarInfo]) -> str:
    parts = [f"{v:+.17g} {variables[k].name}" for k, v in sorted(e.terms.items()) if v != 0.0]
    parts.append(f"{e.const:+.17g}")
    return " ".join(parts)


@dataclass
class StandardForm:
    """Sparse cone program over the free (non-fixed) variables.

    ``x_full = embed(x_free)`` recovers the full vector. ``dims`` gives the
    orthant size and the list of SOC block sizes; rows of ``G`` are ordered
    orthant first, then the cones in order.
    """

    c: np.ndarray
    offset: float
    A: sparse.csr_matrix
    b: np.ndarray
    G: sparse.csr_matrix
    h: np.ndarray
    n_orthant: int
    soc_dims: list[int]
    free_idx: np.ndarray
    fixed_val: np.ndarray
    n_full: int
    trivially_infeasible: str = ""

    def embed(self, x_free: np.ndarray) -> np.ndarray:
        x = self.fixed_val.copy()
        x[self.free_idx] = x_free
        return x

    @classmethod
    def build(cls, model: ConicModel, lb: np.ndarray, ub: np.ndarray) -> "StandardForm":
        return CompiledModel.of(model).reduce(lb, ub)


class CompiledModel:
    """Sparse rendering of a :class:`ConicModel` over all of its variables.

    Compilation happens once per model revision; :meth:`reduce` then
    substitutes fixed variables for each bound set (one per B&B node).
    """

    def __init__(self, model: ConicModel):
        n = model.num_vars
        self.n = n
        self.c = np.zeros(n)
        for k, v in model.objective.terms.items():
            self.c[k] += v
        self.offset = model.objective.const

        def triplets(exprs, sign=1.0):
            r, c, v, k = [], [], [], []
            for i, e in enumerate(exprs):
                for j, a in e.terms.items():
                    if a != 0.0:
                        r.append(i)
                        c.append(j)
                        v.append(sign * a)
                k.append(-sign * e.const)
            return sparse.csr_matrix((v, (r, c)), shape=(len(exprs), n)), np.array(k, float)

        eq = [r.expr for r in model.rows if r.sense == "=="]
        le = [r.expr if r.sense == "<=" else -r.expr for r in model.rows if r.sense != "=="]
        self.row_names = [r.name for r in model.rows if r.sense != "=="]
        # A x = b  from  expr == 0  ->  a'x = -const
        self.A, self.b = triplets(eq)
        # G x <= h  from  expr <= 0  ->  a'x <= -const
        self.G, self.h = triplets(le)
        cone_exprs = []
        self.soc_dims = []
        for cone in model.cones:
            exprs = [cone.head, *cone.args]
            cone_exprs.extend(exprs)
            self.soc_dims.append(len(exprs))
        # s = const + a'x  ->  G row = -a, h = const
        self.Gq, self.hq = triplets(cone_exprs, sign=-1.0)
        self.signature = _signature(model)

    @staticmethod
    def of(model: ConicModel) -> "CompiledModel":
        cached = getattr(model, "_compiled", None)
        if cached is not None and cached.signature == _signature(model):
            return cached
        comp = CompiledModel(model)
        object.__setattr__(model, "_compiled", comp)
        return comp

    def presolve(self, lb: np.ndarray, ub: np.ndarray, passes: int = 8):
        """Tighten bounds from singleton rows and degenerate cones.

        A cone whose head equals plus or minus one argument over the free
        variables forces its other arguments to zero and reduces to
        ``head >= 0``. Fixing what such structures force keeps the reduced
        problem strictly feasible, which the interior point method needs.
        Returns ``(lb, ub, linear_cones, message)``.
        """
        lb, ub = lb.astype(float).copy(), ub.astype(float).copy()
        linear: set[int] = set()
        starts = np.concatenate([[0], np.cumsum(self.soc_dims)]).astype(int)
        bad = ""
        for _ in range(passes):
            changed = False
            fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-12)
            val = np.zeros_like(lb)
            val[fixed] = 0.5 * (lb[fixed] + ub[fixed])
            free = ~fixed

            def singles(M, rhs):
                rhs = rhs - M @ val
                Mf = M.multiply(free[None, :]).tocsr()
                Mf.eliminate_zeros()
                cnt = np.diff(Mf.indptr)
                for i in np.flatnonzero(cnt == 1):
                    k = Mf.indptr[i]
                    yield i, Mf.indices[k], Mf.data[k], rhs[i]

            for _, j, a, r in singles(self.A, self.b):
                v = r / a
                if v < lb[j] - 1e-9 or v > ub[j] + 1e-9:
                    bad = "equality forces a variable outside its bounds"
                lb[j] = ub[j] = v
                changed = True
            for _, j, a, r in singles(self.G, self.h):
                v = r / a
                if a > 0 and v < ub[j]:
                    ub[j] = v
                    changed = True
                elif a < 0 and v > lb[j]:
                    lb[j] = v
                    changed = True
            cross = ub < lb
            if np.any(cross):
                if np.any(lb[cross] - ub[cross] > 1e-9 * np.maximum(1.0, np.abs(lb[cross]))):
                    bad = bad or "bounds crossed after propagation"
                mid = 0.5 * (lb[cross] + ub[cross])
                lb[cross] = ub[cross] = mid
            near = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-12) & (ub > lb)
            if np.any(near):
                lb[near] = ub[near] = 0.5 * (lb[near] + ub[near])
            # degenerate cones
            Q = self.Gq.multiply(free[None, :]).tocsr()
            hq = self.hq - self.Gq @ val
            for c, d in enumerate(self.soc_dims):
                if c in linear:
                    continue
                s0 = starts[c]
                hd = _row(Q, s0)
                if not hd:
                    continue
                for k in range(1, d):
                    ad = _row(Q, s0 + k)
                    if set(ad) != set(hd):
                        continue
                    for sign in (1.0, -1.0):
                        if all(abs(hd[j] - sign * ad[j]) <= 1e-12 * max(1.0, abs(hd[j]))
                               for j in hd) and abs(hq[s0] - sign * hq[s0 + k]) <= 1e-12:
                            break
                    else:
                        continue
                    # remaining args must vanish
                    for m in range(1, d):
                        if m == k:
                            continue
                        row = _row(Q, s0 + m)
                        if len(row) == 1:
                            (j, g), = row.items()
                            lb[j] = ub[j] = hq[s0 + m] / g
                        elif not row and abs(hq[s0 + m]) > 1e-9:
                            bad = bad or "cone forced empty"
                    linear.add(c)
                    changed = True
                    break
            if not changed:
                break
        return lb, ub, linear, bad

    def reduce(self, lb: np.ndarray, ub: np.ndarray) -> StandardForm:
        n = self.n
        lb, ub, linear, bad0 = self.presolve(lb, ub)
        fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-12)
        fixed_val = np.zeros(n)
        fixed_val[fixed] = 0.5 * (lb[fixed] + ub[fixed])
        free_idx = np.flatnonzero(~fixed)
        bad = bad0

        offset = self.offset + self.c @ fixed_val
        c = self.c[free_idx]

        def split(M, rhs):
            rhs = rhs - M @ fixed_val
            Mf = M[:, free_idx].tocsr()
            nnz = np.diff(Mf.indptr) > 0
            return Mf, rhs, nnz

        A, b, a_nnz = split(self.A, self.b)
        if np.any(np.abs(b[~a_nnz]) > 1e-9 * np.maximum(1.0, np.abs(b[~a_nnz]))):
            bad = "equality row violated by fixed variables"
        A, b = A[a_nnz], b[a_nnz]

        G, h, g_nnz = split(self.G, self.h)
        viol = h[~g_nnz] < -1e-9 * np.maximum(1.0, np.abs(h[~g_nnz]))
        if np.any(viol):
            names = [nm for nm, keep in zip(self.row_names, g_nnz) if not keep]
            bad = bad or f"row {names[int(np.argmax(viol))] or '?'} violated by fixed variables"
        G, h = G[g_nnz], h[g_nnz]

        nf = free_idx.size
        col = np.arange(nf)
        ubf, lbf = ub[free_idx], lb[free_idx]
        has_ub, has_lb = np.isfinite(ubf), np.isfinite(lbf)
        Bu = sparse.csr_matrix((np.ones(has_ub.sum()), (np.arange(has_ub.sum()), col[has_ub])),
                               shape=(int(has_ub.sum()), nf))
        Bl = sparse.csr_matrix((-np.ones(has_lb.sum()), (np.arange(has_lb.sum()), col[has_lb])),
                               shape=(int(has_lb.sum()), nf))

        Gq_all, hq_all, q_nnz = split(self.Gq, self.hq)
        keep_rows = []
        soc_dims = []
        start = 0
        heads = []
        for ci, d in enumerate(self.soc_dims):
            blk = slice(start, start + d)
            start += d
            if ci in linear:
                heads.append(blk.start)
                continue
            if not np.any(q_nnz[blk]):
                s = hq_all[blk]
                if s[0] - np.linalg.norm(s[1:]) < -1e-9 * max(1.0, abs(s[0])):
                    bad = bad or "cone violated by fixed variables"
                continue
            keep_rows.extend(range(blk.start, blk.stop))
            soc_dims.append(d)
        heads = np.array(heads, dtype=int)
        Gh, hh = Gq_all[heads], hq_all[heads]
        if heads.size:
            hn = np.diff(Gh.indptr) > 0
            if np.any(hh[~hn] < -1e-9):
                bad = bad or "cone violated by fixed variables"
            Gh, hh = Gh[hn], hh[hn]
        keep_rows = np.array(keep_rows, dtype=int)
        Gq, hq = Gq_all[keep_rows], hq_all[keep_rows]

        Gall = sparse.vstack([G, Gh, Bu, Bl, Gq], format="csr")
        hall = np.concatenate([h, hh, ubf[has_ub], -lbf[has_lb], hq])
        n_orthant = G.shape[0] + Gh.shape[0] + Bu.shape[0] + Bl.shape[0]
        return StandardForm(c, offset, A, b, Gall, hall, n_orthant, soc_dims, free_idx,
                            fixed_val, n, bad)


def _row(M: sparse.csr_matrix, i: int) -> dict[int, float]:
    a, b = M.indptr[i], M.indptr[i + 1]
    return {int(j): float(v) for j, v in zip(M.indices[a:b], M.data[a:b]) if v != 0.0}


def _signature(model: ConicModel) -> tuple:
    return (len(model.variables), len(model.rows), len(model.cones),
            getattr(model, "_objective_version", 0))
