"""Dense primal-dual interior-point solver for small conic programs.

Solves

    minimize    c'x
    subject to  A x + s = b,   s in K

where ``K`` is a product of zero cones (equalities), nonnegative orthants and
second-order cones ``{(u0, u1): ||u1|| <= u0}``. The dual is

    maximize   -b'y   subject to   A'y + c = 0,   y in K*.

The iteration runs on the homogeneous self-dual embedding with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step, so infeasible
problems end with a certificate rather than a stall. Linear systems are the
quasi-definite KKT matrix reduced onto ``x`` and the equality multipliers,
statically regularized and polished by iterative refinement.

The module also maps a :class:`~ldf_opf.opf_model.ReducedOpf` to a
:class:`ConicProgram` (:func:`assemble`) and reads the OPF multipliers back
from a solution (:func:`extract_duals`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np
import scipy.linalg as sla

from .opf_model import DualSolution, ReducedOpf, complementarity_residuals

__all__ = [
    "ConicProgram",
    "SolveResult",
    "SolverOptions",
    "AssemblyError",
    "solve",
    "assemble",
    "extract_duals",
    "set_backend",
    "OpfSolution",
    "solve_opf",
    "polish_duals",
]

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
MAX_ITERATIONS = "max-iterations"


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class ConicProgram:
    """``min c'x  s.t.  A x + s = b, s in K``.

    ``cones`` is an ordered list of ``(kind, size)`` with kind in
    ``{"zero", "nonneg", "soc"}`` covering the rows of ``A`` in order. A
    second-order block stores the radius first. ``variable_map`` names slices
    of ``x`` and ``row_map`` names row ranges; both are used only for
    bookkeeping.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: tuple[tuple[str, int], ...]
    variable_map: Mapping[str, slice] = field(default_factory=dict)
    row_map: Mapping = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise AssemblyError(f"dimension mismatch: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}")
        total = 0
        for kind, size in self.cones:
            if kind not in ("zero", "nonneg", "soc"):
                raise AssemblyError(f"unknown cone kind {kind!r}")
            if size < 0 or (kind == "soc" and size < 2):
                raise AssemblyError(f"bad {kind} block size {size}")
            total += size
        if total != m:
            raise AssemblyError(f"cone blocks cover {total} rows, A has {m}")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    J: float
    residuals: dict
    iterations: int
    certificate: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 100
    step_fraction: float = 0.99
    regularization: float = 1e-11
    refinement_steps: int = 3
    log: TextIO | None = None


# --------------------------------------------------------------------------
# cone algebra


class _Cones:
    def __init__(self, cones: Sequence[tuple[str, int]]):
        zero, nn, soc = [], [], {}
        row = 0
        for kind, size in cones:
            rows = np.arange(row, row + size)
            if kind == "zero":
                zero.append(rows)
            elif kind == "nonneg":
                nn.append(rows)
            else:
                soc.setdefault(size, []).append(rows)
            row += size
        self.m = row
        self.zero = np.concatenate(zero) if zero else np.zeros(0, dtype=int)
        self.nn = np.concatenate(nn) if nn else np.zeros(0, dtype=int)
        self.soc = {d: np.vstack(blocks) for d, blocks in soc.items()}
        self.cone_rows = np.setdiff1d(np.arange(self.m), self.zero)
        self.degree = len(self.nn) + sum(len(v) for v in self.soc.values())

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[self.nn] = 1.0
        for idx in self.soc.values():
            e[idx[:, 0]] = 1.0
        return e

    def shift_interior(self, u: np.ndarray) -> np.ndarray:
        """Move ``u`` into the cone interior the way CVXOPT initializes."""
        alpha = -np.inf
        if len(self.nn):
            alpha = max(alpha, -u[self.nn].min())
        for idx in self.soc.values():
            blk = u[idx]
            alpha = max(alpha, (np.linalg.norm(blk[:, 1:], axis=1) - blk[:, 0]).max())
        u = u.copy()
        u[self.zero] = 0.0
        if alpha >= -1e-8 * max(1.0, np.linalg.norm(u)):
            u += (1.0 + max(alpha, 0.0)) * self.identity()
        return u

    def prod(self, u, v):
        """Jordan product ``u o v``."""
        out = np.zeros(self.m)
        out[self.nn] = u[self.nn] * v[self.nn]
        for idx in self.soc.values():
            a, b = u[idx], v[idx]
            blk = np.empty_like(a)
            blk[:, 0] = np.einsum("ij,ij->i", a, b)
            blk[:, 1:] = a[:, :1] * b[:, 1:] + b[:, :1] * a[:, 1:]
            out[idx] = blk
        return out

    def div(self, lam, d):
        """Solve ``lam o x = d`` for ``x``."""
        out = np.zeros(self.m)
        out[self.nn] = d[self.nn] / lam[self.nn]
        for idx in self.soc.values():
            l, dd = lam[idx], d[idx]
            det = l[:, 0] ** 2 - np.einsum("ij,ij->i", l[:, 1:], l[:, 1:])
            x0 = (l[:, 0] * dd[:, 0] - np.einsum("ij,ij->i", l[:, 1:], dd[:, 1:])) / det
            blk = np.empty_like(l)
            blk[:, 0] = x0
            blk[:, 1:] = (dd[:, 1:] - x0[:, None] * l[:, 1:]) / l[:, :1]
            out[idx] = blk
        return out

    def max_step(self, u, du) -> float:
        """Largest ``a`` with ``u + a du`` in the cone (``inf`` when unbounded)."""
        amax = np.inf
        if len(self.nn):
            neg = du[self.nn] < 0
            if neg.any():
                amax = min(amax, float((-u[self.nn][neg] / du[self.nn][neg]).min()))
        for idx in self.soc.values():
            a_blk, d_blk = u[idx], du[idx]
            for uu, dd in zip(a_blk, d_blk):
                amax = min(amax, _soc_step(uu, dd))
        return amax


def _jdot(u, v):
    return u[0] * v[0] - u[1:] @ v[1:]


def _soc_step(u, d) -> float:
    # u is interior; u + a d leaves the cone at the first positive root of
    # (u0 + a d0)^2 - ||u1 + a d1||^2.
    nu = math.sqrt(max(_jdot(u, u), 0.0))
    if nu == 0.0:
        return 0.0
    u = u / nu
    d = d / nu
    a = _jdot(d, d)
    b = 2.0 * _jdot(u, d)
    c = _jdot(u, u)
    if a == 0.0:
        return -c / b if b < 0 else np.inf
    disc = b * b - 4 * a * c
    if disc < 0:
        # no crossing of the quadric; stay inside iff the direction keeps u0 positive
        return np.inf
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [r for r in ((q / a) if a != 0 else np.inf, (c / q) if q != 0 else np.inf) if r > 0]
    if not roots:
        if d[0] < 0:
            return -u[0] / d[0]
        return np.inf
    return min(roots)


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        self.w = np.sqrt(s[cones.nn] / z[cones.nn])
        self.blocks = {}
        lam = np.zeros(cones.m)
        lam[cones.nn] = np.sqrt(s[cones.nn] * z[cones.nn])
        for d, idx in cones.soc.items():
            S, Z = s[idx], z[idx]
            sn = np.sqrt(np.maximum(S[:, 0] ** 2 - np.einsum("ij,ij->i", S[:, 1:], S[:, 1:]), 1e-300))
            zn = np.sqrt(np.maximum(Z[:, 0] ** 2 - np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:]), 1e-300))
            sb = S / sn[:, None]
            zb = Z / zn[:, None]
            gamma = np.sqrt((1.0 + np.einsum("ij,ij->i", sb, zb)) / 2.0)
            wb = np.empty_like(sb)
            wb[:, 0] = sb[:, 0] + zb[:, 0]
            wb[:, 1:] = sb[:, 1:] - zb[:, 1:]
            wb /= 2.0 * gamma[:, None]
            eta = np.sqrt(sn / zn)
            W = _hyperbolic(wb) * eta[:, None, None]
            wbi = wb.copy()
            wbi[:, 1:] *= -1.0
            Winv = _hyperbolic(wbi) / eta[:, None, None]
            self.blocks[d] = (W, Winv)
            lam[idx] = np.einsum("kij,kj->ki", W, Z)
        self.lam = lam

    def apply(self, v, inverse=False):
        c = self.cones
        out = np.zeros_like(v)
        if v.ndim == 1:
            out[c.nn] = v[c.nn] / self.w if inverse else v[c.nn] * self.w
        else:
            out[c.nn] = v[c.nn] / self.w[:, None] if inverse else v[c.nn] * self.w[:, None]
        for d, idx in c.soc.items():
            M = self.blocks[d][1 if inverse else 0]
            if v.ndim == 1:
                out[idx] = np.einsum("kij,kj->ki", M, v[idx])
            else:
                out[idx] = np.einsum("kij,kjn->kin", M, v[idx])
        return out


def _hyperbolic(w):
    # [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]
    k, d = w.shape
    H = np.zeros((k, d, d))
    H[:, 0, 0] = w[:, 0]
    H[:, 0, 1:] = w[:, 1:]
    H[:, 1:, 0] = w[:, 1:]
    H[:, 1:, 1:] = np.eye(d - 1)[None] + np.einsum("ki,kj->kij", w[:, 1:], w[:, 1:]) / (
        1.0 + w[:, 0]
    )[:, None, None]
    return H


class _KKT:
    """Factorization of ``[[0, A'], [A, -W'W]]`` reduced onto ``(x, y_zero)``."""

    def __init__(self, A, cones: _Cones, scaling: _Scaling, reg: float, refine: int):
        self.A = A
        self.cones = cones
        self.sc = scaling
        self.refine = refine
        zr = cones.zero
        n = A.shape[1]
        self.Y = scaling.apply(A, inverse=True)[cones.cone_rows]
        H = self.Y.T @ self.Y
        Ae = A[zr]
        me = len(zr)
        K = np.zeros((n + me, n + me))
        K[:n, :n] = H + reg * np.eye(n)
        K[:n, n:] = Ae.T
        K[n:, :n] = Ae
        K[n:, n:] = -reg * np.eye(me)
        self.n = n
        self.lu = sla.lu_factor(K, check_finite=False)

    def _solve_once(self, bx, bz):
        c = self.cones
        n = self.n
        wb = self.sc.apply(bz, inverse=True)[c.cone_rows]
        rhs = np.concatenate([bx + self.Y.T @ wb, bz[c.zero]])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        dx = sol[:n]
        dz = np.zeros(c.m)
        dz[c.zero] = sol[n:]
        tmp = np.zeros(c.m)
        tmp[c.cone_rows] = self.Y @ dx - wb
        dz[c.cone_rows] = self.sc.apply(tmp, inverse=True)[c.cone_rows]
        return dx, dz

    def _residual(self, bx, bz, dx, dz):
        W2dz = self.sc.apply(self.sc.apply(dz))
        W2dz[self.cones.zero] = 0.0
        ex = bx - self.A.T @ dz
        ez = bz - (self.A @ dx - W2dz)
        return ex, ez

    def solve(self, bx, bz):
        dx, dz = self._solve_once(bx, bz)
        for _ in range(self.refine):
            ex, ez = self._residual(bx, bz, dx, dz)
            cx, cz = self._solve_once(ex, ez)
            dx += cx
            dz += cz
        return dx, dz


# --------------------------------------------------------------------------
# main loop


def _ipm(prog: ConicProgram, opts: SolverOptions) -> SolveResult:
    A, b, c = prog.A, prog.b, prog.c
    m, n = A.shape
    cones = _Cones(prog.cones)
    log = opts.log
    tol = opts.tol
    bnrm = max(1.0, float(np.linalg.norm(b)))
    cnrm = max(1.0, float(np.linalg.norm(c)))

    if m == 0:
        if np.linalg.norm(c) > 0:
            cert = -c / float(c @ c)
            return SolveResult(DUAL_INFEASIBLE, cert, np.zeros(0), np.zeros(0), -np.inf,
                               {"primal": 0.0, "dual": np.inf, "gap": np.inf}, 0, cert)
        return SolveResult(OPTIMAL, np.zeros(n), np.zeros(0), np.zeros(0), 0.0,
                           {"primal": 0.0, "dual": 0.0, "gap": 0.0}, 0)

    ident = _Scaling(cones, cones.identity(), cones.identity())
    try:
        kkt = _KKT(A, cones, ident, opts.regularization, opts.refinement_steps)
    except (np.linalg.LinAlgError, ValueError):
        kkt = None
    if kkt is not None:
        x, dz = kkt.solve(np.zeros(n), b.copy())
        s = cones.shift_interior(-dz)
        _, z0 = kkt.solve(-c, np.zeros(m))
        z = cones.shift_interior(z0)
        z[cones.zero] = z0[cones.zero]
    else:
        x = np.zeros(n)
        s = cones.identity()
        z = cones.identity()
    tau, kappa = 1.0, 1.0
    nu = cones.degree
    e = cones.identity()

    status = MAX_ITERATIONS
    res = {}
    it = 0
    for it in range(opts.max_iter + 1):
        rx = A.T @ z + c * tau
        rz = s + A @ x - b * tau
        rt = kappa + c @ x + b @ z
        mu = (s @ z + tau * kappa) / (nu + 1)

        pcost = float(c @ x) / tau
        dcost = -float(b @ z) / tau
        pres = float(np.linalg.norm(rz)) / tau / bnrm
        dres = float(np.linalg.norm(rx)) / tau / cnrm
        gap = max(abs(pcost - dcost), float(s @ z) / tau**2)
        res = {"primal": pres, "dual": dres, "gap": gap}
        if log is not None:
            print(f"{it:3d}  pcost {pcost: .10e}  dcost {dcost: .10e}  gap {gap:.2e}  "
                  f"pres {pres:.2e}  dres {dres:.2e}  tau {tau:.2e}  kappa {kappa:.2e}", file=log)
        if pres <= tol and dres <= tol and gap <= tol * (1.0 + abs(pcost)):
            status = OPTIMAL
            break
        bz_ = float(b @ z)
        cx_ = float(c @ x)
        if bz_ < 0 and float(np.linalg.norm(A.T @ z)) / cnrm / (-bz_) <= tol:
            status = PRIMAL_INFEASIBLE
            break
        if cx_ < 0 and float(np.linalg.norm(A @ x + s)) / bnrm / (-cx_) <= tol:
            status = DUAL_INFEASIBLE
            break
        if it == opts.max_iter:
            break

        try:
            sc = _Scaling(cones, s, z)
            kkt = _KKT(A, cones, sc, opts.regularization, opts.refinement_steps)
            dx2, dz2 = kkt.solve(-c, b.copy())
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            break
        lam = sc.lam

        def direction(eta, ds, dk):
            wds = sc.apply(cones.div(lam, ds))
            wds[cones.zero] = 0.0
            dx1, dz1 = kkt.solve(-eta * rx, -eta * rz - wds)
            num = -eta * rt - dk / tau - c @ dx1 - b @ dz1
            den = c @ dx2 + b @ dz2 - kappa / tau
            dtau = num / den
            dx = dx1 + dtau * dx2
            dz = dz1 + dtau * dz2
            ds_ = wds - sc.apply(sc.apply(dz))
            ds_[cones.zero] = 0.0
            dkappa = (dk - kappa * dtau) / tau
            return dx, ds_, dz, dtau, dkappa

        def step_length(ds, dz, dtau, dk):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        # predictor
        lam_sq = cones.prod(lam, lam)
        dxa, dsa, dza, dta, dka = direction(1.0, -lam_sq, -tau * kappa)
        alpha_a = min(1.0, step_length(dsa, dza, dta, dka))
        sigma = min(1.0, max(0.0, (1.0 - alpha_a))) ** 3

        # corrector
        ws = sc.apply(dsa, inverse=True)
        wz = sc.apply(dza)
        ds_target = -lam_sq + sigma * mu * e - cones.prod(ws, wz)
        dk_target = -tau * kappa + sigma * mu - dta * dka
        dx, ds, dz, dt, dk = direction(1.0 - sigma, ds_target, dk_target)
        alpha = min(1.0, opts.step_fraction * step_length(ds, dz, dt, dk))
        if not np.isfinite(alpha) or alpha <= 0:
            break
        nx, ns, nz = x + alpha * dx, s + alpha * ds, z + alpha * dz
        ntau, nkappa = tau + alpha * dt, kappa + alpha * dk
        if not (np.all(np.isfinite(nx)) and np.all(np.isfinite(ns)) and np.all(np.isfinite(nz))
                and np.isfinite(ntau) and ntau > 0 and nkappa >= 0):
            # numerical breakdown near the precision floor: keep the last iterate
            break
        x, s, z, tau, kappa = nx, ns, nz, ntau, nkappa

    cert = None
    if status == OPTIMAL or status == MAX_ITERATIONS:
        xs, ss, zs = x / tau, s / tau, z / tau
        J = float(c @ xs)
    elif status == PRIMAL_INFEASIBLE:
        scale = -float(b @ z)
        xs, ss, zs = x / scale, s / scale, z / scale
        cert = zs
        J = np.inf
    else:
        scale = -float(c @ x)
        xs, ss, zs = x / scale, s / scale, z / scale
        cert = xs
        J = -np.inf
    return SolveResult(status, xs, ss, zs, J, res, it, cert)


_backend: Callable[[ConicProgram, SolverOptions], SolveResult] = _ipm


def set_backend(fn: Callable[[ConicProgram, SolverOptions], SolveResult] | None):
    """Swap the solver used by :func:`solve` (``None`` restores the built-in one)."""
    global _backend
    previous = _backend
    _backend = _ipm if fn is None else fn
    return previous


def solve(prog: ConicProgram, opts: SolverOptions | None = None, **kw) -> SolveResult:
    """Solve ``prog``. Keyword arguments override fields of ``opts``."""
    opts = opts or SolverOptions()
    if kw:
        opts = SolverOptions(**{**opts.__dict__, **kw})
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _backend(prog, opts)


# --------------------------------------------------------------------------
# OPF mapping


def assemble(reduced: ReducedOpf) -> ConicProgram:
    """Cast the reduced OPF as a conic program over ``x = [p_g; q_g]``.

    Rows, in order: the linear constraint block, finite upper then lower
    bounds on ``p_g``, the same for ``q_g`` (all in one orthant), then one
    three-row block per bounded branch holding
    ``(f_max, -(r'p_g + s'l), -(r'q_g + t'l))``.
    """
    ng = reduced.n_g
    if reduced.M_p.shape[1] != ng or reduced.M_q.shape[1] != ng:
        raise AssemblyError("M_p/M_q column count differs from the generator count")
    if reduced.G.shape[1] != len(reduced.ell):
        raise AssemblyError("G column count differs from the load vector length")
    zeros = np.zeros((0, 2 * ng))
    blocks = [np.hstack([reduced.M_p, reduced.M_q]) if reduced.m else zeros]
    rhs = [reduced.G @ reduced.ell + reduced.h if reduced.m else np.zeros(0)]
    row_map: dict = {"linear": slice(0, reduced.m)}
    row = reduced.m
    eye = np.eye(ng)
    for name, col, bound, sign in (
        ("p_ub", 0, reduced.p_max, 1.0),
        ("p_lb", 0, reduced.p_min, -1.0),
        ("q_ub", ng, reduced.q_max, 1.0),
        ("q_lb", ng, reduced.q_min, -1.0),
    ):
        finite = np.flatnonzero(np.isfinite(bound))
        Ablk = np.zeros((len(finite), 2 * ng))
        Ablk[np.arange(len(finite)), col + finite] = sign
        blocks.append(Ablk)
        rhs.append(sign * bound[finite])
        row_map[name] = (slice(row, row + len(finite)), finite)
        row += len(finite)
    n_orthant = row
    cones = [("nonneg", n_orthant)] if n_orthant else []
    soc_rows = {}
    for k in reduced.bounded_branches:
        Ablk = np.zeros((3, 2 * ng))
        Ablk[1, :ng] = reduced.r[k]
        Ablk[2, ng:] = reduced.r[k]
        blocks.append(Ablk)
        rhs.append(np.array([reduced.f_max[k], -reduced.s[k] @ reduced.ell, -reduced.t[k] @ reduced.ell]))
        soc_rows[k] = slice(row, row + 3)
        cones.append(("soc", 3))
        row += 3
    row_map["cones"] = soc_rows
    A = np.vstack(blocks) if blocks else np.zeros((0, 2 * ng))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    c = np.concatenate([reduced.c_tilde, np.zeros(ng)])
    return ConicProgram(
        c=c,
        A=A,
        b=b,
        cones=tuple(cones),
        variable_map={"p_g": slice(0, ng), "q_g": slice(ng, 2 * ng)},
        row_map=row_map,
    )


def extract_duals(prog: ConicProgram, result: SolveResult, reduced: ReducedOpf) -> DualSolution:
    """Read the OPF multipliers off an optimal conic solution.

    A cone multiplier ``(u0, u1, u2)`` maps to ``mu = u0``, ``theta = -u1``,
    ``phi = -u2`` so that the stationarity conditions take the documented form.
    """
    if result.status != OPTIMAL:
        raise ValueError(f"cannot extract duals from a {result.status} solve")
    y = result.y
    rm = prog.row_map
    ng = reduced.n_g
    lam = y[rm["linear"]].copy()
    bounds = {}
    for name in ("p_ub", "p_lb", "q_ub", "q_lb"):
        rows, finite = rm[name]
        v = np.zeros(ng)
        v[finite] = y[rows]
        bounds[name] = v
    nb = reduced.n_branches
    theta = np.zeros(nb)
    phi = np.zeros(nb)
    mu = np.zeros(nb)
    for k, rows in rm["cones"].items():
        u = y[rows]
        mu[k], theta[k], phi[k] = u[0], -u[1], -u[2]
    return DualSolution(
        lam=lam,
        alpha_lb=bounds["p_lb"],
        alpha_ub=bounds["p_ub"],
        beta_lb=bounds["q_lb"],
        beta_ub=bounds["q_ub"],
        theta=theta,
        phi=phi,
        mu=mu,
    )


def _stationarity(red: ReducedOpf, d: DualSolution) -> float:
    sp = red.c_tilde + red.M_p.T @ d.lam + d.alpha_ub - d.alpha_lb - red.r.T @ d.theta
    sq = red.M_q.T @ d.lam + d.beta_ub - d.beta_lb - red.r.T @ d.phi
    return float(np.abs(np.concatenate([sp, sq])).max(initial=0.0))


def _active_system(red: ReducedOpf, p_g, q_g, dual: DualSolution, free_cones: bool):
    """Candidate columns of the stationarity system with their ranking keys."""
    ng = red.n_g
    cols, conf, tags = [], [], []

    def cand(col, mult, slack, tag):
        if mult > slack and np.any(col):
            cols.append(col)
            conf.append(mult / max(slack, 1e-300))
            tags.append(tag)

    if red.m:
        slack = red.G @ red.ell + red.h - red.M_p @ p_g - red.M_q @ q_g
        for i in range(red.m):
            cand(np.concatenate([red.M_p[i], red.M_q[i]]), dual.lam[i], slack[i], ("lam", i))
    unit = np.eye(2 * ng)
    for name, off, sign, mult, gap in (
        ("alpha_ub", 0, 1.0, dual.alpha_ub, red.p_max - p_g),
        ("alpha_lb", 0, -1.0, dual.alpha_lb, p_g - red.p_min),
        ("beta_ub", ng, 1.0, dual.beta_ub, red.q_max - q_g),
        ("beta_lb", ng, -1.0, dual.beta_lb, q_g - red.q_min),
    ):
        for g in np.flatnonzero(np.isfinite(gap)):
            cand(sign * unit[off + g], mult[g], gap[g], (name, g))
    fp, fq = red.flows(p_g, q_g)
    zero = np.zeros(ng)
    for k in red.bounded_branches:
        norm = math.hypot(fp[k], fq[k])
        gap = red.f_max[k] - norm
        if free_cones:
            # stationarity carries -r' theta and -r' phi
            cand(np.concatenate([-red.r[k], zero]), dual.mu[k], gap, ("theta", k))
            cand(np.concatenate([zero, -red.r[k]]), dual.mu[k], gap, ("phi", k))
        elif norm > 0:
            # (theta, phi) = -mu f / |f| on the ray fixed by the primal flow
            u, w = fp[k] / norm, fq[k] / norm
            cand(np.concatenate([u * red.r[k], w * red.r[k]]), dual.mu[k], gap, ("mu", k, u, w))
    return cols, conf, tags


def _polish(red: ReducedOpf, p_g, q_g, dual: DualSolution, free_cones: bool) -> DualSolution | None:
    ng = red.n_g
    cols, conf, tags = _active_system(red, p_g, q_g, dual, free_cones)
    rhs = -np.concatenate([red.c_tilde, np.zeros(ng)])
    chosen = []
    for i in np.argsort(conf, kind="stable")[::-1]:
        trial = chosen + [i]
        if np.linalg.matrix_rank(np.column_stack([cols[j] for j in trial])) == len(trial):
            chosen = trial
    y = np.linalg.lstsq(np.column_stack([cols[j] for j in chosen]), rhs, rcond=None)[0] if chosen else []
    scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))
    nb = red.n_branches
    out = {
        "lam": np.zeros(red.m), "alpha_ub": np.zeros(ng), "alpha_lb": np.zeros(ng),
        "beta_ub": np.zeros(ng), "beta_lb": np.zeros(ng),
        "theta": np.zeros(nb), "phi": np.zeros(nb), "mu": np.zeros(nb),
    }
    for j, val in zip(chosen, y):
        tag = tags[j]
        if tag[0] in ("theta", "phi"):
            out[tag[0]][tag[1]] = val
            continue
        if val < -1e-12 * scale:
            return None
        val = max(val, 0.0)
        if tag[0] == "mu":
            _, k, u, w = tag
            out["mu"][k], out["theta"][k], out["phi"][k] = val, -val * u, -val * w
        else:
            out[tag[0]][tag[1]] = val
    if free_cones:
        out["mu"] = np.hypot(out["theta"], out["phi"])
    return DualSolution(**out)


def polish_duals(reduced: ReducedOpf, p_g, q_g, dual: DualSolution) -> DualSolution | None:
    """Recompute the multipliers exactly on the active set of an interior-point solution.

    A constraint counts as active when its multiplier exceeds its slack;
    stationarity restricted to the active multipliers is then a linear
    system, solved after admitting columns in order of multiplier-to-slack
    ratio while they keep it full rank. Active cones are tried first with
    ``theta`` and ``phi`` as free unknowns (``mu`` their norm), then with
    ``(theta, phi)`` pinned to the ray ``-mu f / |f|`` of the primal flow.
    The first candidate whose stationarity and complementarity residuals are
    no worse than the input's is returned; ``None`` if neither qualifies.
    """
    red = reduced
    p_g = np.asarray(p_g, dtype=float)
    q_g = np.asarray(q_g, dtype=float)
    scale = max(1.0, float(np.abs(red.c_tilde).max(initial=0.0)))
    floor = 1e-12 * scale
    stat0 = _stationarity(red, dual)
    comp0 = max(complementarity_residuals(red, dual, p_g, q_g).values())
    for free in (True, False):
        cand = _polish(red, p_g, q_g, dual, free)
        if cand is None:
            continue
        if _stationarity(red, cand) > max(stat0, floor) * (1 + 1e-6):
            continue
        if max(complementarity_residuals(red, cand, p_g, q_g).values()) > max(comp0, floor) * (1 + 1e-6):
            continue
        return cand
    return None


@dataclass
class OpfSolution:
    """Outcome of one reduced-OPF solve, with the OPF multipliers when optimal."""

    reduced: ReducedOpf
    program: ConicProgram
    result: SolveResult
    dual: DualSolution | None
    p_g: np.ndarray
    q_g: np.ndarray
    polished: bool = False

    @property
    def status(self) -> str:
        return self.result.status

    @property
    def optimal(self) -> bool:
        return self.result.status == OPTIMAL

    @property
    def J(self) -> float:
        """Objective of the full OPF (generation cost including the slack)."""
        if not self.optimal:
            return self.result.J
        return float(self.reduced.c_tilde @ self.p_g) + self.reduced.constant_offset

    @property
    def reduced_value(self) -> float:
        """Value of the reduced operator, ``c_tilde' p_g`` without the constant."""
        return float(self.reduced.c_tilde @ self.p_g)

    def flows(self):
        return self.reduced.flows(self.p_g, self.q_g)


def solve_opf(reduced: ReducedOpf, opts: SolverOptions | None = None, *, polish: bool = True, **kw) -> OpfSolution:
    """Assemble, solve and read back the multipliers, polished when possible."""
    prog = assemble(reduced)
    res = solve(prog, opts, **kw)
    ng = reduced.n_g
    p_g, q_g = res.x[:ng].copy(), res.x[ng : 2 * ng].copy()
    dual, polished = None, False
    if res.status == OPTIMAL:
        dual = extract_duals(prog, res, reduced)
        if polish:
            better = polish_duals(reduced, p_g, q_g, dual)
            if better is not None:
                dual, polished = better, True
    return OpfSolution(reduced, prog, res, dual, p_g, q_g, polished)
