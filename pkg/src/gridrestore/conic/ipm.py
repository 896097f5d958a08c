"""Primal-dual interior-point method for linear + second-order cone programs.

Solves ``min c'x  s.t.  Ax = b,  Gx + s = h,  s in K`` where ``K`` is a
product of a nonnegative orthant and second-order cones, through the
homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector. The embedding lets one code path return either an
optimal primal-dual pair or a certificate of primal or dual infeasibility.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .model import ConicModel, StandardForm

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
TIME_LIMIT = "time-limit"


@dataclass
class IPMSettings:
    feastol: float = 1e-9
    abstol: float = 1e-9
    reltol: float = 1e-9
    max_iter: int = 120
    step: float = 0.99
    reg: float = 1e-10
    refine: int = 3
    time_limit: float = math.inf


@dataclass
class SolveResult:
    """Outcome of a continuous solve.

    ``x`` is the full variable vector (fixed variables included), ``y`` and
    ``z`` are the multipliers of the lowered equality and cone rows.
    ``residuals`` holds the relative primal, dual and complementarity
    residuals at the returned point.
    """

    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    objective: float = math.nan
    dual_objective: float = math.nan
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    certificate: dict[str, np.ndarray] | None = None
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class NumericalError(RuntimeError):
    def __init__(self, msg: str, trace):
        super().__init__(msg)
        self.trace = trace


# -- cone algebra ---------------------------------------------------------------

class ConeSpace:
    """Index bookkeeping and Jordan algebra for ``R+^l x Q^{n1} x ...``."""

    def __init__(self, n_orthant: int, soc_dims: list[int]):
        self.l = n_orthant
        self.q = list(soc_dims)
        self.blocks = []
        start = n_orthant
        for d in soc_dims:
            self.blocks.append(slice(start, start + d))
            start += d
        self.m = start
        self.degree = n_orthant + len(soc_dims)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.blocks:
            e[sl.start] = 1.0
        return e

    def prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        w = np.empty_like(u)
        w[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.blocks:
            a, b = u[sl], v[sl]
            w[sl.start] = a @ b
            w[sl.start + 1: sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        return w

    def div(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = d`` for x."""
        x = np.empty_like(d)
        x[: self.l] = d[: self.l] / lam[: self.l]
        for sl in self.blocks:
            l, v = lam[sl], d[sl]
            det = l[0] ** 2 - l[1:] @ l[1:]
            x0 = (l[0] * v[0] - l[1:] @ v[1:]) / det
            x[sl.start] = x0
            x[sl.start + 1: sl.stop] = (v[1:] - x0 * l[1:]) / l[0]
        return x

    def max_step(self, u: np.ndarray, d: np.ndarray) -> float:
        """Largest alpha with ``u + alpha d`` in the cone (u interior)."""
        alpha = math.inf
        dl = d[: self.l]
        neg = dl < 0
        if np.any(neg):
            alpha = float(np.min(-u[: self.l][neg] / dl[neg]))
        for sl in self.blocks:
            a_, b_ = u[sl], d[sl]
            qa = b_[0] ** 2 - b_[1:] @ b_[1:]
            qb = 2.0 * (a_[0] * b_[0] - a_[1:] @ b_[1:])
            qc = a_[0] ** 2 - a_[1:] @ a_[1:]
            alpha = min(alpha, _first_positive_root(qa, qb, qc))
        return alpha

    def shift_into(self, r: np.ndarray) -> np.ndarray:
        """Return ``r + (1 + a) e`` with the smallest a making it interior."""
        a = -math.inf
        if self.l:
            a = max(a, float(np.max(-r[: self.l])))
        for sl in self.blocks:
            v = r[sl]
            a = max(a, float(np.linalg.norm(v[1:]) - v[0]))
        if a < 0:
            return r.copy()
        return r + (1.0 + a) * self.identity()

    def nt_scaling(self, s: np.ndarray, z: np.ndarray):
        """Nesterov-Todd scaling: returns (W blocks, W^2 blocks, lambda)."""
        lam = np.empty_like(s)
        w_lp = np.sqrt(s[: self.l] / z[: self.l])
        lam[: self.l] = np.sqrt(s[: self.l] * z[: self.l])
        wq, wq2 = [], []
        for sl in self.blocks:
            sb, zb = s[sl], z[sl]
            d = sb.size
            sres = sb[0] ** 2 - sb[1:] @ sb[1:]
            zres = zb[0] ** 2 - zb[1:] @ zb[1:]
            sn = sb / math.sqrt(sres)
            zn = zb / math.sqrt(zres)
            gamma = math.sqrt(max((1.0 + sn @ zn) / 2.0, 0.0))
            jz = zn.copy()
            jz[1:] = -jz[1:]
            wbar = (sn + jz) / (2.0 * gamma)
            eta = (sres / zres) ** 0.25
            w0, w1 = wbar[0], wbar[1:]
            Wbar = np.empty((d, d))
            Wbar[0, 0] = w0
            Wbar[0, 1:] = w1
            Wbar[1:, 0] = w1
            Wbar[1:, 1:] = np.eye(d - 1) + np.outer(w1, w1) / (1.0 + w0)
            W = eta * Wbar
            wq.append(W)
            J = -np.eye(d)
            J[0, 0] = 1.0
            wq2.append(eta ** 2 * (2.0 * np.outer(wbar, wbar) - J))
            lam[sl] = W @ zb
        return w_lp, wq, wq2, lam

    def apply(self, w_lp, wq, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        out[: self.l] = w_lp * v[: self.l]
        for sl, W in zip(self.blocks, wq):
            out[sl] = W @ v[sl]
        return out

    def apply_inv(self, w_lp, wq, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        out[: self.l] = v[: self.l] / w_lp
        for sl, W in zip(self.blocks, wq):
            # W^{-1} = J W J / eta^2 for the NT scaling matrix
            eta2 = W[0, 0] ** 2 - W[0, 1:] @ W[0, 1:]
            jv = v[sl].copy()
            jv[1:] = -jv[1:]
            r = W @ jv
            r[1:] = -r[1:]
            out[sl] = r / eta2
        return out


def _first_positive_root(a: float, b: float, c: float) -> float:
    if c <= 0:
        return 0.0
    if abs(a) < 1e-300:
        return -c / b if b < 0 else math.inf
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return math.inf
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    roots = []
    if q != 0:
        roots.extend([q / a, c / q])
    roots = [r for r in roots if r > 0]
    return min(roots) if roots else math.inf


# -- KKT system -----------------------------------------------------------------

class _KKT:
    """Factorised ``[[0 A' G'], [A 0 0], [G 0 -W^2]]`` with static regularisation."""

    def __init__(self, sf: StandardForm, cones: ConeSpace, reg: float, refine: int):
        self.n = sf.c.size
        self.p = sf.b.size
        self.m = cones.m
        self.cones = cones
        self.reg = reg
        self.refine = refine
        n, p, m = self.n, self.p, self.m
        A, G = sf.A, sf.G
        self.upper = sparse.bmat(
            [[None, A.T, G.T], [A, None, None], [G, None, None]],
            format="csc", dtype=float,
        ) if (p or m) else sparse.csc_matrix((n, n))
        self.N = n + p + m
        sign = np.concatenate([np.ones(n), -np.ones(p), -np.ones(m)])
        self.reg_diag = sparse.diags(reg * sign)

    def factor(self, w_lp: np.ndarray | None, wq2: list[np.ndarray] | None):
        n, p, m, cones = self.n, self.p, self.m, self.cones
        rows, cols, vals = [], [], []
        off = n + p
        if w_lp is None:
            idx = np.arange(m) + off
            rows.append(idx)
            cols.append(idx)
            vals.append(-np.ones(m))
        else:
            idx = np.arange(cones.l) + off
            rows.append(idx)
            cols.append(idx)
            vals.append(-(w_lp ** 2))
            for sl, W2 in zip(cones.blocks, wq2):
                ii, jj = np.meshgrid(np.arange(sl.start, sl.stop), np.arange(sl.start, sl.stop),
                                     indexing="ij")
                rows.append(ii.ravel() + off)
                cols.append(jj.ravel() + off)
                vals.append(-W2.ravel())
        block = sparse.csc_matrix(
            (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [],
                                                   np.concatenate(cols) if cols else [])),
            shape=(self.N, self.N))
        self.K = (self.upper + block).tocsc()
        Kreg = (self.K + self.reg_diag).tocsc()
        self.lu = splu(Kreg, permc_spec="COLAMD")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self.lu.solve(rhs)
        for _ in range(self.refine):
            r = rhs - self.K @ x
            if np.linalg.norm(r, np.inf) <= 1e-14 * (1 + np.linalg.norm(rhs, np.inf)):
                break
            x = x + self.lu.solve(r)
        return x


# -- main loop ------------------------------------------------------------------

def solve_standard(sf: StandardForm, settings: IPMSettings | None = None) -> SolveResult:
    # breakdowns near the boundary surface as non-finite steps, handled below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve_standard(sf, settings)


def _solve_standard(sf: StandardForm, settings: IPMSettings | None) -> SolveResult:
    st = settings or IPMSettings()
    t0 = time.perf_counter()
    if sf.trivially_infeasible:
        return SolveResult(INFEASIBLE, certificate={"reason": sf.trivially_infeasible})
    n, p = sf.c.size, sf.b.size
    cones = ConeSpace(sf.n_orthant, sf.soc_dims)
    m = cones.m
    c, b, h, A, G = sf.c, sf.b, sf.h, sf.A, sf.G

    if n == 0:
        ok = _in_cone_closed(cones, h) and np.all(np.abs(b) <= 1e-9)
        if not ok:
            return SolveResult(INFEASIBLE, certificate={"reason": "fixed point violates rows"})
        return SolveResult(OPTIMAL, sf.embed(np.zeros(0)), np.zeros(p), np.zeros(m),
                           sf.offset, sf.offset, {"primal": 0.0, "dual": 0.0, "gap": 0.0})

    kkt = _KKT(sf, cones, st.reg, st.refine)
    kkt.factor(None, None)
    # primal start: min ||Gx - h|| s.t. Ax = b
    sol = kkt.solve(np.concatenate([np.zeros(n), b, h]))
    x = sol[:n]
    s = cones.shift_into(-sol[n + p:])
    # dual start: min ||z|| s.t. A'y + G'z + c = 0
    sol = kkt.solve(np.concatenate([-c, np.zeros(p), np.zeros(m)]))
    y = sol[n:n + p]
    z = cones.shift_into(sol[n + p:])
    tau, kappa = 1.0, 1.0

    nb = max(1.0, np.linalg.norm(b))
    nh = max(1.0, np.linalg.norm(h))
    nc = max(1.0, np.linalg.norm(c))
    e = cones.identity()
    trace = []
    best = None
    status = ITERATION_LIMIT

    for it in range(st.max_iter + 1):
        r1 = A.T @ y + G.T @ z + c * tau
        r2 = -(A @ x) + b * tau
        r3 = s + G @ x - h * tau
        cx, by, hz = c @ x, b @ y, h @ z
        r4 = kappa + cx + by + hz
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        pres = max(np.linalg.norm(r2) / nb, np.linalg.norm(r3) / nh) / tau
        dres = np.linalg.norm(r1) / nc / tau
        pcost, dcost = cx / tau, -(by + hz) / tau
        gap = (s @ z) / tau ** 2
        relgap = gap / max(1.0, abs(pcost), abs(dcost))
        trace.append((it, pres, dres, gap))
        res = {"primal": float(pres), "dual": float(dres), "gap": float(relgap)}
        if best is None or max(res.values()) < max(best[0].values()):
            best = (res, x / tau, y / tau, z / tau, pcost, dcost)

        if pres <= st.feastol and dres <= st.feastol and (gap <= st.abstol or relgap <= st.reltol):
            status = OPTIMAL
            break
        # infeasibility certificates
        if hz + by < 0:
            pinf = np.linalg.norm(A.T @ y + G.T @ z) / nc / -(hz + by)
            if pinf <= st.feastol and tau < kappa:
                yy, zz = y / -(hz + by), z / -(hz + by)
                return SolveResult(INFEASIBLE, iterations=it, trace=trace,
                                   certificate={"y": yy, "z": zz})
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x) / nb, np.linalg.norm(G @ x + s) / nh) / -cx
            if dinf <= st.feastol and tau < kappa:
                return SolveResult(UNBOUNDED, iterations=it, trace=trace,
                                   certificate={"x": sf.embed(x / -cx) - sf.fixed_val})
        if it == st.max_iter:
            break
        if time.perf_counter() - t0 > st.time_limit:
            status = TIME_LIMIT
            break

        try:
            w_lp, wq, wq2, lam = cones.nt_scaling(s, z)
            kkt.factor(w_lp, wq2)
        except (ValueError, RuntimeError, np.linalg.LinAlgError, ZeroDivisionError) as exc:
            logger.debug("KKT factorisation failed at iteration %d: %s", it, exc)
            break
        q = np.concatenate([c, b, h])
        sol1 = kkt.solve(np.concatenate([-c, b, h]))
        q_sol1 = q @ sol1

        def direction(eta, d_s, d_k):
            rhs = np.concatenate([-eta * r1, eta * r2,
                                  -eta * r3 - cones.apply(w_lp, wq, cones.div(lam, d_s))])
            sol2 = kkt.solve(rhs)
            dtau = (-eta * r4 - d_k / tau - q @ sol2) / (q_sol1 - kappa / tau)
            d = sol2 + dtau * sol1
            dx, dy, dz = d[:n], d[n:n + p], d[n + p:]
            ds = cones.apply(w_lp, wq, cones.div(lam, d_s) - cones.apply(w_lp, wq, dz))
            dk = (d_k - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dk

        def step_len(dz, ds, dtau, dk):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        lam2 = cones.prod(lam, lam)
        dxa, dya, dza, dsa, dtaua, dka = direction(1.0, -lam2, -tau * kappa)
        alpha_a = min(1.0, step_len(dza, dsa, dtaua, dka))
        sigma = (1.0 - alpha_a) ** 3
        corr = cones.prod(cones.apply_inv(w_lp, wq, dsa), cones.apply(w_lp, wq, dza))
        d_s = -lam2 - corr + sigma * mu * e
        d_k = -tau * kappa - dtaua * dka + sigma * mu
        dx, dy, dz, ds, dtau, dk = direction(1.0 - sigma, d_s, d_k)
        alpha = min(1.0, st.step * step_len(dz, ds, dtau, dk))
        if not np.isfinite(alpha) or alpha < 1e-12:
            logger.debug("step length collapsed at iteration %d", it)
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dk
        # renormalise the embedding to keep tau, kappa O(1)
        scale = max(tau, kappa)
        if scale > 1e6 or scale < 1e-6:
            x, y, z, s, tau, kappa = x / scale, y / scale, z / scale, s / scale, tau / scale, kappa / scale

    res, xb, yb, zb, pc, dc = best
    if status == OPTIMAL:
        res = {"primal": float(pres), "dual": float(dres), "gap": float(relgap)}
        xb, yb, zb, pc, dc = x / tau, y / tau, z / tau, pcost, dcost
    return SolveResult(status, sf.embed(xb), yb, zb, pc + sf.offset, dc + sf.offset, res,
                       iterations=len(trace) - 1, trace=trace)


def _in_cone_closed(cones: ConeSpace, s: np.ndarray, tol: float = 1e-9) -> bool:
    if cones.l and np.any(s[: cones.l] < -tol):
        return False
    for sl in cones.blocks:
        if s[sl.start] - np.linalg.norm(s[sl.start + 1: sl.stop]) < -tol:
            return False
    return True


def solve_continuous(model: ConicModel, settings: IPMSettings | None = None,
                     lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``model`` (binaries relaxed to [0, 1])."""
    model.check()
    sf = model.standard_form(lb, ub)
    return solve_standard(sf, settings)
