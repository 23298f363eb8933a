"""Primal-dual interior-point method for second-order cone programs.

The program is converted to the standard form::

    minimize q'x   s.t.  A x = b,  G x + s = h,  s in K

with ``K`` a product of a nonnegative orthant and second-order cones, and
solved through the homogeneous self-dual embedding with Nesterov-Todd
scaling and a Mehrotra predictor-corrector. KKT systems are dense, with a
tiny static regularization and iterative refinement.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .program import ConeProgram

__all__ = ["Status", "SolverOptions", "KktResiduals", "ConeSolution", "solve"]

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverOptions:
    feastol: float = 1e-8
    gaptol: float = 1e-8
    max_iters: int = 100
    regularization: float = 1e-11
    refine_steps: int = 3
    equilibrate: bool = True
    step_fraction: float = 0.99


@dataclass
class KktResiduals:
    primal_res: float
    dual_res: float
    gap: float


@dataclass
class ConeSolution:
    """Solver output in the maximization convention of :class:`ConeProgram`.

    Multipliers satisfy ``c = A' dual_eq - sum_j M_j' dual_cones[j]`` at an
    optimum, with every ``dual_cones[j]`` in its (self-dual) cone.
    """

    status: Status
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_cones: list
    objective_value: float
    kkt_residuals: KktResiduals
    iterations: int
    certificate: dict | None = field(default=None)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# cone algebra
# ---------------------------------------------------------------------------

class _Cones:
    """Orthant of size ``l`` followed by second-order cones.

    Cone operations act on all second-order cones at once through segment
    sums over the concatenated blocks.
    """

    def __init__(self, nlin: int, soc_dims: list[int]):
        self.l = nlin
        self.soc_dims = np.asarray(soc_dims, dtype=np.int64)
        self.nsoc = len(soc_dims)
        self.slices = []
        start = nlin
        for d in soc_dims:
            self.slices.append(slice(start, start + d))
            start += d
        self.m = start
        self.degree = nlin + self.nsoc
        self.e = np.zeros(self.m)
        self.e[:nlin] = 1.0
        # local (SOC-part) bookkeeping
        self.starts = np.concatenate([[0], np.cumsum(self.soc_dims)[:-1]]).astype(np.int64) \
            if self.nsoc else np.zeros(0, np.int64)
        self.cid = np.repeat(np.arange(self.nsoc), self.soc_dims)
        self.head = np.zeros(self.m - nlin, dtype=bool)
        self.head[self.starts] = True
        self.tail = ~self.head
        self.e[nlin + self.starts] = 1.0
        # entry pattern of the block-diagonal W^2
        rows, cols = [], []
        for st, d in zip(self.starts, self.soc_dims):
            r = np.arange(st, st + d)
            rows.append(np.repeat(r, d))
            cols.append(np.tile(r, d))
        self.blk_rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        self.blk_cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        self.blk_cid = self.cid[self.blk_rows] if rows else np.zeros(0, np.int64)
        diag = self.blk_rows == self.blk_cols
        self.blk_J = np.zeros(self.blk_rows.size)
        self.blk_J[diag & self.head[self.blk_rows]] = 1.0
        self.blk_J[diag & self.tail[self.blk_rows]] = -1.0

    # segment helpers on the SOC part
    def _seg(self, v):
        return np.add.reduceat(v, self.starts) if self.nsoc else np.zeros(0)

    def _det(self, u):
        u0 = u[self.starts]
        uu = u * u
        uu[self.starts] = 0.0
        n1 = np.sqrt(self._seg(uu))
        return (u0 - n1) * (u0 + n1)

    def jordan(self, u, v):
        l = self.l
        out = np.empty(self.m)
        out[:l] = u[:l] * v[:l]
        if self.nsoc:
            us, vs = u[l:], v[l:]
            o = us[self.starts][self.cid] * vs + vs[self.starts][self.cid] * us
            o[self.starts] = self._seg(us * vs)
            out[l:] = o
        return out

    def jordan_solve(self, lam, d):
        """Solve ``lam o x = d`` for x."""
        l = self.l
        out = np.empty(self.m)
        out[:l] = d[:l] / lam[:l]
        if self.nsoc:
            ls, ds = lam[l:], d[l:]
            l0, d0 = ls[self.starts], ds[self.starts]
            x0 = (2.0 * l0 * d0 - self._seg(ls * ds)) / self._det(ls)
            o = (ds - x0[self.cid] * ls) / l0[self.cid]
            o[self.starts] = x0
            out[l:] = o
        return out

    def shift_amount(self, u):
        """Smallest ``a`` with ``u + a e`` on the cone boundary."""
        a = -np.inf
        if self.l:
            a = -np.min(u[:self.l])
        if self.nsoc:
            us = u[self.l:]
            u0 = us[self.starts]
            n1 = np.sqrt(np.maximum(self._seg(us * us) - u0 * u0, 0.0))
            a = max(a, np.max(n1 - u0))
        return a

    def max_step(self, u, du):
        """Largest ``a >= 0`` keeping ``u + a du`` in the cone (``u`` interior)."""
        a = np.inf
        l = self.l
        if l:
            neg = du[:l] < 0
            if np.any(neg):
                a = np.min(-u[:l][neg] / du[:l][neg])
        if self.nsoc:
            us, ds = u[l:], du[l:]
            st = self.starts
            u0, d0 = us[st], ds[st]
            c = self._det(us)
            qa = 2.0 * d0 * d0 - self._seg(ds * ds)
            qb = 2.0 * u0 * d0 - self._seg(us * ds)
            with np.errstate(divide="ignore", invalid="ignore"):
                disc = qb * qb - qa * c
                qq = -(qb + np.copysign(np.sqrt(np.maximum(disc, 0.0)), qb))
                r1 = qq / qa
                r2 = c / qq
            r1 = np.where(r1 > 0, r1, np.inf)
            r2 = np.where(r2 > 0, r2, np.inf)
            steps = np.where(disc >= 0, np.minimum(r1, r2), np.inf)
            steps = np.where(c > 0, steps, 0.0)
            a = min(a, float(np.min(steps)))
        return a


class _NTScaling:
    """Nesterov-Todd scaling ``W`` (symmetric) with ``W z = W^{-1} s = lam``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        l = cones.l
        if np.any(s[:l] <= 0) or np.any(z[:l] <= 0):
            raise FloatingPointError("iterate left the cone interior")
        self.d = np.sqrt(s[:l] / z[:l])
        if cones.nsoc:
            st, cid = cones.starts, cones.cid
            ss, zs = s[l:], z[l:]
            dets, detz = cones._det(ss), cones._det(zs)
            if not (np.all(dets > 0) and np.all(detz > 0)):
                # iterate reached the cone boundary in floating point
                raise FloatingPointError("iterate left the cone interior")
            sn, zn = np.sqrt(dets), np.sqrt(detz)
            sb, zb = ss / sn[cid], zs / zn[cid]
            gamma = np.sqrt((1.0 + cones._seg(sb * zb)) / 2.0)
            jz = -zb
            jz[st] = zb[st]
            self.wb = (sb + jz) / (2.0 * gamma[cid])
            self.eta = np.sqrt(sn / zn)
            self.w0 = self.wb[st]
        self.lam = self.apply(z)

    def apply(self, v, inverse=False):
        """``W v`` (or ``W^{-1} v``) for a vector or for every column of a matrix."""
        cones = self.cones
        l = cones.l
        vec = v.ndim == 1
        v2 = v[:, None] if vec else v
        out = np.empty_like(v2)
        d = self.d[:, None]
        out[:l] = v2[:l] / d if inverse else v2[:l] * d
        if cones.nsoc:
            st, cid = cones.starts, cones.cid
            vs = v2[l:]
            v0 = vs[st]
            w0 = self.w0[:, None]
            eta = self.eta[:, None]
            wb = self.wb[:, None]
            ip = np.add.reduceat(wb * vs, st, axis=0) - w0 * v0
            if inverse:
                o = (vs + (-v0 + ip / (1.0 + w0))[cid] * wb) / eta[cid]
                o[st] = (w0 * v0 - ip) / eta
            else:
                o = eta[cid] * (vs + (v0 + ip / (1.0 + w0))[cid] * wb)
                o[st] = eta * (w0 * v0 + ip)
            out[l:] = o
        return out[:, 0] if vec else out

    def squared_entries(self):
        """Diagonal of the orthant part and SOC block entries of ``W^2``."""
        c = self.cones
        if not c.nsoc:
            return self.d ** 2, np.zeros(0)
        eta2 = (self.eta ** 2)[c.blk_cid]
        vals = eta2 * (2.0 * self.wb[c.blk_rows] * self.wb[c.blk_cols] - c.blk_J)
        return self.d ** 2, vals

    def dense(self, inverse=False):
        """Block-diagonal ``W`` (or ``W^{-1}``) as a dense ``m x m`` array."""
        c = self.cones
        l = c.l
        out = np.zeros((c.m, c.m))
        idx = np.arange(l)
        out[idx, idx] = 1.0 / self.d if inverse else self.d
        if c.nsoc:
            r, cc, cid = c.blk_rows, c.blk_cols, c.blk_cid
            wb, w0 = self.wb, self.w0[cid]
            vals = wb[r] * wb[cc] / (1.0 + w0)
            vals[r == cc] += 1.0
            hr, hc = c.head[r], c.head[cc]
            edge = hr ^ hc
            sign = -1.0 if inverse else 1.0
            vals[edge] = sign * wb[np.where(hr[edge], cc[edge], r[edge])]
            vals[hr & hc] = w0[hr & hc]
            eta = self.eta[cid]
            vals = vals / eta if inverse else vals * eta
            out[l + r, l + cc] = vals
        return out

    def dense_squared(self):
        c = self.cones
        out = np.zeros((c.m, c.m))
        dlin, vals = self.squared_entries()
        idx = np.arange(c.l)
        out[idx, idx] = dlin
        out[c.l + c.blk_rows, c.l + c.blk_cols] = vals
        return out

    def squared_matvec(self, v):
        """``W^2 v`` without forming the matrix."""
        return self.apply(self.apply(v))


class _ReducedKKT:
    """Solves ``[[0, A', G'], [A, 0, 0], [G, 0, -W^2]] (x, y, z) = r``.

    The cone block is eliminated, leaving ``[[G' W^-2 G, A'], [A, 0]]``,
    which is factored densely with a small static regularization. Solutions
    are refined against the unreduced system.
    """

    def __init__(self, A, G, cones, opts: SolverOptions):
        self.A, self.G, self.cones, self.opts = A, G, cones, opts
        self.n, self.p, self.m = G.shape[1], A.shape[0], G.shape[0]
        n, p = self.n, self.p
        self.M = np.zeros((n + p, n + p))
        self.M[:n, n:] = A.T
        self.M[n:, :n] = A
        self.reg = np.concatenate([np.full(n, opts.regularization),
                                   np.full(p, -opts.regularization)])
        self.W = None

    def factor(self, W):
        self.W = W
        if W is None:
            self.Winv = self.W2 = None
            Gs = self.G
        else:
            self.Winv = W.dense(inverse=True)
            self.W2 = W.dense_squared()
            Gs = self.Winv @ self.G
        self.Gs = Gs
        M = self.M.copy()
        M[:self.n, :self.n] = Gs.T @ Gs
        idx = np.arange(self.n + self.p)
        M[idx, idx] += self.reg
        self.lu = sla.lu_factor(M, check_finite=False)

    def _winv(self, v):
        return v if self.Winv is None else self.Winv @ v

    def _w2(self, v):
        return v if self.W2 is None else self.W2 @ v

    def _solve_once(self, r):
        n, p = self.n, self.p
        r1, r2, r3 = r[:n], r[n:n + p], r[n + p:]
        t3 = self._winv(r3)
        rhs = np.concatenate([r1 + self.Gs.T @ t3, r2])
        xy = sla.lu_solve(self.lu, rhs, check_finite=False)
        x = xy[:n]
        z = self._winv(self.Gs @ x - t3)
        return np.concatenate([xy, z])

    def matvec(self, v):
        n, p = self.n, self.p
        x, y, z = v[:n], v[n:n + p], v[n + p:]
        return np.concatenate([self.A.T @ y + self.G.T @ z, self.A @ x,
                               self.G @ x - self._w2(z)])

    def solve(self, rhs):
        sol = self._solve_once(rhs)
        nr = max(1.0, np.linalg.norm(rhs))
        prev = np.inf
        for _ in range(self.opts.refine_steps):
            r = rhs - self.matvec(sol)
            nrm = np.linalg.norm(r)
            if nrm <= 1e-13 * nr or nrm > 0.5 * prev:
                break
            prev = nrm
            sol = sol + self._solve_once(r)
        return sol


# ---------------------------------------------------------------------------
# standard form
# ---------------------------------------------------------------------------

@dataclass
class _StandardForm:
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    cones: _Cones
    row_of_cone: list  # program cone id -> slice of standard-form rows
    eq_basis: np.ndarray | None  # maps reduced equality duals back


def _standard_form(prog: ConeProgram):
    n = prog.num_vars
    q = -prog.objective_vector()
    A, b = prog.equality_data()
    lin, soc = [], []
    for j, d in enumerate(prog.cone_dims()):
        (lin if d == 1 else soc).append(j)
    blocks, consts, row_of_cone = [], [], [None] * prog.num_cones
    start = 0
    for j in lin + soc:
        M, v = prog.cone_data(j)
        blocks.append(-M)
        consts.append(v)
        row_of_cone[j] = slice(start, start + M.shape[0])
        start += M.shape[0]
    G = np.vstack(blocks) if blocks else np.zeros((0, n))
    h = np.concatenate(consts) if consts else np.zeros(0)
    cones = _Cones(len(lin), [prog.cone_dims()[j] for j in soc])
    return _StandardForm(q, A, b, G, h, cones, row_of_cone, None)


def _reduce_equalities(sf: _StandardForm):
    """Drop dependent equality rows; return a certificate if inconsistent."""
    A, b = sf.A, sf.b
    if A.shape[0] == 0:
        sf.eq_basis = np.zeros((0, 0))
        return None
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(float).eps * (S[0] if S.size else 0.0)
    r = int(np.sum(S > tol))
    Ur = U[:, :r]
    resid = b - Ur @ (Ur.T @ b)
    if np.linalg.norm(resid) > 1e-9 * max(1.0, np.linalg.norm(b)):
        y = -resid / (resid @ resid)  # A'y = 0, b'y = -1
        return y
    sf.A = S[:r, None] * Vt[:r]
    sf.b = Ur.T @ b
    sf.eq_basis = Ur
    return None


def _equilibrate(sf: _StandardForm, iters: int = 10):
    """Ruiz scaling: column scale D, row scales E_A and E_G (uniform per SOC)."""
    n = sf.q.size
    D = np.ones(n)
    EA = np.ones(sf.A.shape[0])
    EG = np.ones(sf.G.shape[0])
    A, G = sf.A.copy(), sf.G.copy()
    cones = sf.cones
    for _ in range(iters):
        colmax = np.zeros(n)
        if A.size:
            colmax = np.maximum(colmax, np.abs(A).max(axis=0))
        if G.size:
            colmax = np.maximum(colmax, np.abs(G).max(axis=0))
        colmax[colmax == 0] = 1.0
        dc = 1.0 / np.sqrt(colmax)
        ra = np.abs(A).max(axis=1) if A.size else np.zeros(A.shape[0])
        ra[ra == 0] = 1.0
        ea = 1.0 / np.sqrt(ra)
        rg = np.abs(G).max(axis=1) if G.size else np.zeros(G.shape[0])
        for sl in cones.slices:
            rg[sl] = rg[sl].max()
        rg[rg == 0] = 1.0
        eg = 1.0 / np.sqrt(rg)
        A = ea[:, None] * A * dc[None, :]
        G = eg[:, None] * G * dc[None, :]
        D *= dc
        EA *= ea
        EG *= eg
        if np.all(np.abs(1 - dc) < 0.05) and np.all(np.abs(1 - eg) < 0.05):
            break
    return A, G, D, EA, EG


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def solve(prog: ConeProgram, opts: SolverOptions | None = None) -> ConeSolution:
    """Solve ``prog``; never raises on infeasible or ill-posed programs."""
    opts = opts or SolverOptions()
    sf = _standard_form(prog)
    n = prog.num_vars
    cert = _reduce_equalities(sf)
    if cert is not None:
        return ConeSolution(Status.INFEASIBLE, np.full(n, np.nan), cert,
                            [np.zeros(d) for d in prog.cone_dims()], -np.inf,
                            KktResiduals(np.inf, np.inf, np.inf), 0,
                            {"type": "primal_infeasible", "y": cert,
                             "z": [np.zeros(d) for d in prog.cone_dims()]})
    if sf.cones.m == 0:
        return _solve_equality_only(prog, sf)
    return _hsde(prog, sf, opts)


def _solve_equality_only(prog, sf):
    n = prog.num_vars
    A, b, q = sf.A, sf.b, sf.q
    x, *_ = np.linalg.lstsq(A, b, rcond=None) if A.size else (np.zeros(n),)
    y, *_ = np.linalg.lstsq(A.T, -q, rcond=None) if A.size else (np.zeros(0),)
    dres = np.linalg.norm(A.T @ y + q) if A.size else np.linalg.norm(q)
    res = KktResiduals(float(np.linalg.norm(A @ x - b)) if A.size else 0.0, float(dres), 0.0)
    dual_eq = sf.eq_basis @ y if sf.eq_basis is not None and sf.eq_basis.size else np.zeros(prog.num_equalities)
    if dres > 1e-9 * max(1.0, np.linalg.norm(q)):
        ray = -(q + A.T @ y)
        return ConeSolution(Status.UNBOUNDED, x, dual_eq, [], np.inf, res, 0,
                            {"type": "dual_infeasible", "x": ray / -(q @ ray)})
    obj = float(-q @ x) + prog.objective.const
    return ConeSolution(Status.OPTIMAL, x, dual_eq, [], obj, res, 0)


def _hsde(prog: ConeProgram, sf: _StandardForm, opts: SolverOptions) -> ConeSolution:
    cones = sf.cones
    n, p, m = sf.q.size, sf.A.shape[0], cones.m
    q0, b0, h0 = sf.q, sf.b, sf.h
    A0, G0 = sf.A, sf.G
    if opts.equilibrate:
        A, G, D, EA, EG = _equilibrate(sf)
    else:
        A, G, D, EA, EG = A0, G0, np.ones(n), np.ones(p), np.ones(m)
    q, b, h = D * q0, EA * b0, EG * h0

    kkt = _ReducedKKT(A, G, cones, opts)

    def factor(W):
        kkt.factor(W)
        return kkt, None

    def kkt_solve(Kt, lu, rhs):
        return kkt.solve(rhs)

    nq = max(1.0, np.linalg.norm(q0))
    nb = max(1.0, np.linalg.norm(b0))
    nh = max(1.0, np.linalg.norm(h0))

    # initial point: least-squares projections shifted into the cone interior
    try:
        Kt, lu = factor(None)
        v = kkt_solve(Kt, lu, np.concatenate([np.zeros(n), b, h]))
        x = v[:n]
        s = -v[n + p:]
        v = kkt_solve(Kt, lu, np.concatenate([-q, np.zeros(p), np.zeros(m)]))
        y = v[n:n + p]
        z = v[n + p:]
    except (np.linalg.LinAlgError, ValueError):
        x, y, s, z = np.zeros(n), np.zeros(p), cones.e.copy(), cones.e.copy()
    for u in (s, z):
        a = cones.shift_amount(u)
        if a >= -1e-8 * max(1.0, np.linalg.norm(u)):
            u += (1.0 + a) * cones.e
    tau, kappa = 1.0, 1.0

    status = Status.MAX_ITERATIONS
    best = None
    it = 0
    for it in range(opts.max_iters + 1):
        rx = A.T @ y + G.T @ z + q * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        cx, by, hz = q @ x, b @ y, h @ z
        rt = kappa + cx + by + hz
        gap = s @ z
        mu = (gap + tau * kappa) / (cones.degree + 1)

        # termination tests on unscaled quantities
        pres = max(np.linalg.norm(ry / EA) / nb if p else 0.0,
                   np.linalg.norm(rz / EG) / nh) / tau
        dres = np.linalg.norm(rx / D) / nq / tau
        pcost = cx / tau
        gapn = gap / tau ** 2 / max(1.0, abs(pcost))
        res = KktResiduals(float(pres), float(dres), float(gapn))
        log.debug("iter %d: pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e",
                  it, pres, dres, gapn, tau, kappa)
        if not all(np.isfinite([pres, dres, gapn])):
            status = Status.NUMERICAL_FAILURE
            break
        if best is None or max(pres, dres, gapn) < max(best[1].primal_res, best[1].dual_res, best[1].gap):
            best = ((x.copy(), y.copy(), s.copy(), z.copy(), tau), res)
        if pres <= opts.feastol and dres <= opts.feastol and gapn <= opts.gaptol:
            status = Status.OPTIMAL
            break
        if by + hz < 0:
            pinf = np.linalg.norm((A.T @ y + G.T @ z) / D) / nq / (-(by + hz))
            if pinf <= opts.feastol:
                return _certificate(prog, sf, Status.INFEASIBLE, x, y, z, EA, EG, D, it,
                                    res, scale=-(by + hz))
        if cx < 0:
            dinf = max(np.linalg.norm((A @ x) / EA) / nb if p else 0.0,
                       np.linalg.norm((G @ x + s) / EG) / nh) / (-cx)
            if dinf <= opts.feastol:
                return _certificate(prog, sf, Status.UNBOUNDED, x, y, z, EA, EG, D, it,
                                    res, scale=-cx)
        if it == opts.max_iters:
            status = Status.MAX_ITERATIONS
            break

        try:
            W = _NTScaling(cones, s, z)
            lam = W.lam
            Kt, lu = factor(W)
            v1 = kkt_solve(Kt, lu, np.concatenate([-q, b, h]))
            denom = q @ v1[:n] + b @ v1[n:n + p] + h @ v1[n + p:] - kappa / tau

            def direction(eta, ds, dk):
                t = cones.jordan_solve(lam, ds)
                Wt = W.apply(t)
                v2 = kkt_solve(Kt, lu, np.concatenate([-eta * rx, -eta * ry, -eta * rz - Wt]))
                dtau = (-eta * rt - dk / tau - (q @ v2[:n] + b @ v2[n:n + p] + h @ v2[n + p:])) / denom
                v = v2 + dtau * v1
                dz = v[n + p:]
                dsv = Wt - kkt.W2 @ dz
                dkappa = (dk - kappa * dtau) / tau
                return v[:n], v[n:n + p], dz, dsv, dtau, dkappa

            def step_len(d):
                _, _, dz, dsv, dtau, dkappa = d
                a = min(cones.max_step(s, dsv), cones.max_step(z, dz))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkappa < 0:
                    a = min(a, -kappa / dkappa)
                return a

            aff = direction(1.0, -cones.jordan(lam, lam), -tau * kappa)
            a_aff = min(1.0, step_len(aff))
            sigma = (1.0 - a_aff) ** 3
            ds = (-cones.jordan(lam, lam)
                  - cones.jordan(W.apply(aff[3], inverse=True), W.apply(aff[2]))
                  + sigma * mu * cones.e)
            dk = -tau * kappa - aff[4] * aff[5] + sigma * mu
            dirn = direction(1.0 - sigma, ds, dk)
            alpha = min(1.0, opts.step_fraction * step_len(dirn))
        except (np.linalg.LinAlgError, ValueError, FloatingPointError, ZeroDivisionError) as err:
            log.debug("iter %d: search direction failed (%s)", it, err)
            status = Status.NUMERICAL_FAILURE
            break
        if not np.isfinite(alpha) or alpha < 1e-12:
            log.debug("iter %d: step length %.2e", it, alpha)
            status = Status.NUMERICAL_FAILURE
            break
        dx, dy, dz, dsv, dtau, dkappa = dirn
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status is not Status.OPTIMAL and best is not None:
        (x, y, s, z, tau), res = best
    xu = D * x / tau
    yu = EA * y / tau
    zu = EG * z / tau
    dual_eq = sf.eq_basis @ yu if p else np.zeros(prog.num_equalities)
    dual_cones = [zu[sl] for sl in sf.row_of_cone]
    log.debug("ipm finished: %s after %d iterations (%s)", status.value, it, res)
    obj = float(-(q0 @ xu)) + prog.objective.const
    return ConeSolution(status, xu, dual_eq, dual_cones, obj, res, it)


def _certificate(prog, sf, status, x, y, z, EA, EG, D, it, res, scale):
    n = prog.num_vars
    if status is Status.INFEASIBLE:
        yu = EA * y / scale
        zu = EG * z / scale
        dual_eq = sf.eq_basis @ yu if sf.A.shape[0] else np.zeros(prog.num_equalities)
        zc = [zu[sl] for sl in sf.row_of_cone]
        return ConeSolution(status, np.full(n, np.nan), dual_eq, zc, -np.inf, res, it,
                            {"type": "primal_infeasible", "y": dual_eq, "z": zc})
    xu = D * x / scale
    return ConeSolution(status, xu, np.zeros(prog.num_equalities),
                        [np.zeros(sl.stop - sl.start) for sl in sf.row_of_cone],
                        np.inf, res, it, {"type": "dual_infeasible", "x": xu})
