"""Reduced LinDistFlow OPF and its dual.

Eliminating voltages and slack injections from the full OPF leaves a problem
in the generator dispatch ``(p_g, q_g)`` alone:

    J(l, f) = min  c_tilde' p_g
              s.t. M_p p_g + M_q q_g <= G l + h
                   p_min <= p_g <= p_max,   q_min <= q_g <= q_max
                   || (r_j' p_g + s_j' l,  r_j' q_g + t_j' l) || <= f_j

with ``c_tilde = c_g - c_s`` and ``l = [p_l; q_l]`` the load *injections*
(negated demands). Rows of the linear block always come in this order:
upper voltage bounds (bus order), lower voltage bounds, slack real upper,
slack real lower, slack reactive upper, slack reactive lower; rows with an
infinite bound are left out.

Eliminating the slack also leaves the constant ``-c_s * sum(p_l)`` in the
objective. :func:`primal_objective` and :func:`dual_value` add it back so
reported costs equal the full OPF objective.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from .ldf import LdfModel, build_ldf
from .netcase import NetworkCase, RadialTopology, validate_radial

__all__ = [
    "ReducedOpf",
    "DualSolution",
    "ModelError",
    "reduce",
    "reduce_case",
    "primal_objective",
    "dual_value",
    "check_dual_feasible",
    "complementarity_residuals",
    "full_form_program",
    "write_reduced_csv",
]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ReducedOpf:
    gen_buses: tuple[int, ...]
    load_buses: tuple[int, ...]
    branches: tuple[int, ...]
    c_tilde: np.ndarray
    c_s: float
    M_p: np.ndarray
    M_q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    row_labels: tuple[tuple, ...]
    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    r: np.ndarray
    s: np.ndarray
    t: np.ndarray
    f_max: np.ndarray
    ell: np.ndarray

    @property
    def n_g(self) -> int:
        return len(self.gen_buses)

    @property
    def n_l(self) -> int:
        return len(self.load_buses)

    @property
    def m(self) -> int:
        return len(self.h)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def bounded_branches(self) -> np.ndarray:
        """Positions (into ``branches``) of branches with a finite flow limit."""
        return np.flatnonzero(np.isfinite(self.f_max))

    @property
    def constant_offset(self) -> float:
        return -self.c_s * float(np.sum(self.ell[: self.n_l]))

    def branch_index(self, branch_id: int) -> int:
        return self.branches.index(branch_id)

    def with_params(self, ell=None, f_max=None, c_tilde=None) -> "ReducedOpf":
        """Copy with a different load vector, flow-limit vector or cost vector."""
        changes = {}
        if ell is not None:
            changes["ell"] = np.asarray(ell, dtype=float).copy()
        if f_max is not None:
            changes["f_max"] = np.asarray(f_max, dtype=float).copy()
        if c_tilde is not None:
            changes["c_tilde"] = np.asarray(c_tilde, dtype=float).copy()
        return dataclasses.replace(self, **changes)

    def flows(self, p_g, q_g):
        """Branch flows ``(f_p, f_q)`` at a dispatch, one entry per branch."""
        return self.r @ p_g + self.s @ self.ell, self.r @ q_g + self.t @ self.ell


@dataclass(frozen=True)
class DualSolution:
    lam: np.ndarray
    alpha_lb: np.ndarray
    alpha_ub: np.ndarray
    beta_lb: np.ndarray
    beta_ub: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray

    def scaled(self, k: float) -> "DualSolution":
        return DualSolution(*(k * getattr(self, f.name) for f in dataclasses.fields(self)))


def reduce(case: NetworkCase, topology: RadialTopology, ldf: LdfModel) -> ReducedOpf:
    """Eliminate ``v``, ``p_s``, ``q_s`` and the load injections from the full OPF."""
    bus = {b.id: b for b in case.buses}
    for b in case.buses:
        if b.v_min > b.v_max:
            raise ModelError(f"bus {b.id}: voltage bounds [{b.v_min}, {b.v_max}] are empty")
    gen = {g.bus: g for g in case.generators}
    sl = case.slack
    n_l = ldf.n_l

    Rg, Xg = ldf.R @ ldf.A_g.T, ldf.X @ ldf.A_g.T
    Gv = -np.hstack([ldf.R @ ldf.A_l.T, ldf.X @ ldf.A_l.T])
    vmax = np.array([bus[b].v_max for b in ldf.buses])
    vmin = np.array([bus[b].v_min for b in ldf.buses])

    rows_p, rows_q, rows_G, rows_h, labels = [], [], [], [], []

    def add(mp, mq, g, h, label):
        rows_p.append(mp)
        rows_q.append(mq)
        rows_G.append(g)
        rows_h.append(h)
        labels.append(label)

    for k, b in enumerate(ldf.buses):
        if np.isfinite(vmax[k]):
            add(Rg[k], Xg[k], Gv[k], vmax[k] - ldf.v0, ("v_max", b))
    for k, b in enumerate(ldf.buses):
        if np.isfinite(vmin[k]):
            add(-Rg[k], -Xg[k], -Gv[k], ldf.v0 - vmin[k], ("v_min", b))

    ones_g = np.ones(ldf.n_g)
    zg = np.zeros(ldf.n_g)
    real_sum = np.concatenate([np.ones(n_l), np.zeros(n_l)])
    reac_sum = np.concatenate([np.zeros(n_l), np.ones(n_l)])
    # p_s = -1'p_g - 1'p_l, q_s likewise
    if np.isfinite(sl.p_max):
        add(-ones_g, zg, real_sum, sl.p_max, ("ps_max", sl.bus))
    if np.isfinite(sl.p_min):
        add(ones_g, zg, -real_sum, -sl.p_min, ("ps_min", sl.bus))
    if np.isfinite(sl.q_max):
        add(zg, -ones_g, reac_sum, sl.q_max, ("qs_max", sl.bus))
    if np.isfinite(sl.q_min):
        add(zg, ones_g, -reac_sum, -sl.q_min, ("qs_min", sl.bus))

    m = len(rows_h)
    ng = ldf.n_g
    M_p = np.array(rows_p).reshape(m, ng)
    M_q = np.array(rows_q).reshape(m, ng)
    G = np.array(rows_G).reshape(m, 2 * n_l)
    h = np.array(rows_h, dtype=float).reshape(m)

    gens = [gen[b] for b in ldf.gen_buses]
    branch_limit = {br.id: br.f_max for br in case.branches}
    ell = np.concatenate(
        [[-bus[b].p_demand for b in ldf.load_buses], [-bus[b].q_demand for b in ldf.load_buses]]
    ).astype(float)
    return ReducedOpf(
        gen_buses=ldf.gen_buses,
        load_buses=ldf.load_buses,
        branches=ldf.branches,
        c_tilde=np.array([g.cost for g in gens], dtype=float) - sl.cost,
        c_s=float(sl.cost),
        M_p=M_p,
        M_q=M_q,
        G=G,
        h=h,
        row_labels=tuple(labels),
        p_min=np.array([g.p_min for g in gens], dtype=float),
        p_max=np.array([g.p_max for g in gens], dtype=float),
        q_min=np.array([g.q_min for g in gens], dtype=float),
        q_max=np.array([g.q_max for g in gens], dtype=float),
        r=ldf.r,
        s=ldf.s,
        t=ldf.t,
        f_max=np.array([branch_limit[b] for b in ldf.branches], dtype=float),
        ell=ell,
    )


def reduce_case(case: NetworkCase):
    """Topology, LinDistFlow model and reduced OPF of ``case`` in one call."""
    topo = validate_radial(case)
    ldf = build_ldf(case, topo)
    return topo, ldf, reduce(case, topo, ldf)


def primal_objective(reduced: ReducedOpf, p_g) -> float:
    return float(reduced.c_tilde @ np.asarray(p_g, dtype=float)) + reduced.constant_offset


def _finite_dot(mult, bound):
    mask = np.isfinite(bound)
    return float(mult[mask] @ bound[mask])


def dual_value(reduced: ReducedOpf, dual: DualSolution) -> float:
    ell = reduced.ell
    val = -float((reduced.G @ ell + reduced.h) @ dual.lam) if reduced.m else 0.0
    val += _finite_dot(dual.alpha_lb, reduced.p_min) - _finite_dot(dual.alpha_ub, reduced.p_max)
    val += _finite_dot(dual.beta_lb, reduced.q_min) - _finite_dot(dual.beta_ub, reduced.q_max)
    for k in range(reduced.n_branches):
        if dual.theta[k] == 0 and dual.phi[k] == 0 and dual.mu[k] == 0:
            continue
        val -= float((dual.theta[k] * reduced.s[k] + dual.phi[k] * reduced.t[k]) @ ell)
        val -= float(dual.mu[k] * reduced.f_max[k])
    return val + reduced.constant_offset


def check_dual_feasible(reduced: ReducedOpf, dual: DualSolution) -> dict:
    """Largest violations of dual stationarity, cone membership and sign.

    The reactive stationarity row uses ``sum(phi_j r_j)``, which is what
    differentiating the Lagrangian in ``q_g`` gives.
    """
    lam = dual.lam
    stat_p = reduced.c_tilde + reduced.M_p.T @ lam + dual.alpha_ub - dual.alpha_lb - reduced.r.T @ dual.theta
    stat_q = reduced.M_q.T @ lam + dual.beta_ub - dual.beta_lb - reduced.r.T @ dual.phi
    cone = np.hypot(dual.theta, dual.phi) - dual.mu
    nonneg = np.concatenate(
        [lam, dual.alpha_lb, dual.alpha_ub, dual.beta_lb, dual.beta_ub, dual.mu]
    )
    return {
        "stationarity_p": float(np.max(np.abs(stat_p), initial=0.0)),
        "stationarity_q": float(np.max(np.abs(stat_q), initial=0.0)),
        "cone": float(max(0.0, np.max(cone, initial=0.0))),
        "negativity": float(max(0.0, -np.min(nonneg, initial=0.0))),
    }


def complementarity_residuals(reduced: ReducedOpf, dual: DualSolution, p_g, q_g) -> dict:
    """Products of each multiplier with its constraint slack (all should vanish)."""
    out = {}
    if reduced.m:
        slack = reduced.G @ reduced.ell + reduced.h - reduced.M_p @ p_g - reduced.M_q @ q_g
        out["linear"] = float(np.max(np.abs(dual.lam * slack)))
    else:
        out["linear"] = 0.0
    terms = []
    for mult, gap in (
        (dual.alpha_lb, p_g - reduced.p_min),
        (dual.alpha_ub, reduced.p_max - p_g),
        (dual.beta_lb, q_g - reduced.q_min),
        (dual.beta_ub, reduced.q_max - q_g),
    ):
        mask = np.isfinite(gap)
        terms.append(np.max(np.abs(mult[mask] * gap[mask]), initial=0.0))
    out["bounds"] = float(max(terms))
    fp, fq = reduced.flows(p_g, q_g)
    cone = 0.0
    for k in reduced.bounded_branches:
        # <(mu, theta, phi), (f_max, f_p, f_q)> for the cone pair
        cone = max(cone, abs(dual.mu[k] * reduced.f_max[k] + dual.theta[k] * fp[k] + dual.phi[k] * fq[k]))
    out["cone"] = float(cone)
    return out


def full_form_program(case: NetworkCase, topology: RadialTopology, ldf: LdfModel):
    """Conic program of the OPF *before* reduction.

    Variables ``[p, q, v, p_s, q_s, f_p, f_q]`` with the LinDistFlow,
    load, slack-balance and flow definitions as equality rows.
    """
    from .conic_solver import ConicProgram

    bus = {b.id: b for b in case.buses}
    gen = {g.bus: g for g in case.generators}
    sl = case.slack
    n = ldf.n
    I = np.eye(n)
    P, Q, V = 0, n, 2 * n
    PS, QS = 3 * n, 3 * n + 1
    FP, FQ = 3 * n + 2, 4 * n + 2
    nv = 5 * n + 2

    def row(**parts):
        r = np.zeros(nv)
        for key, val in parts.items():
            off = {"p": P, "q": Q, "v": V, "fp": FP, "fq": FQ}.get(key)
            if key == "ps":
                r[PS] = val
            elif key == "qs":
                r[QS] = val
            else:
                r[off : off + n] = val
        return r

    eq_A, eq_b = [], []
    # v - R p - X q = v0
    for k in range(n):
        eq_A.append(row(v=I[k], p=-ldf.R[k], q=-ldf.X[k]))
        eq_b.append(ldf.v0)
    for k, b in enumerate(ldf.load_buses):
        j = ldf.buses.index(b)
        eq_A.append(row(p=I[j]))
        eq_b.append(-bus[b].p_demand)
        eq_A.append(row(q=I[j]))
        eq_b.append(-bus[b].q_demand)
    eq_A.append(row(ps=1.0, p=np.ones(n)))
    eq_b.append(0.0)
    eq_A.append(row(qs=1.0, q=np.ones(n)))
    eq_b.append(0.0)
    for k in range(n):
        eq_A.append(row(fp=I[k], p=-ldf.F[k]))
        eq_b.append(0.0)
        eq_A.append(row(fq=I[k], q=-ldf.F[k]))
        eq_b.append(0.0)

    in_A, in_b = [], []

    def bound(vec, lo, hi):
        if np.isfinite(hi):
            in_A.append(vec)
            in_b.append(hi)
        if np.isfinite(lo):
            in_A.append(-vec)
            in_b.append(-lo)

    for k, b in enumerate(ldf.buses):
        bound(row(v=I[k]), bus[b].v_min, bus[b].v_max)
    for b in ldf.gen_buses:
        j = ldf.buses.index(b)
        g = gen[b]
        bound(row(p=I[j]), g.p_min, g.p_max)
        bound(row(q=I[j]), g.q_min, g.q_max)
    bound(row(ps=1.0), sl.p_min, sl.p_max)
    bound(row(qs=1.0), sl.q_min, sl.q_max)

    limit = {br.id: br.f_max for br in case.branches}
    soc_A, soc_b = [], []
    n_soc = 0
    for k, bid in enumerate(ldf.branches):
        if np.isfinite(limit[bid]):
            soc_A += [np.zeros(nv), -row(fp=I[k]), -row(fq=I[k])]
            soc_b += [limit[bid], 0.0, 0.0]
            n_soc += 1

    A = np.vstack(eq_A + in_A + soc_A)
    b = np.array(eq_b + in_b + soc_b, dtype=float)
    c = np.zeros(nv)
    for b_id in ldf.gen_buses:
        c[P + ldf.buses.index(b_id)] = gen[b_id].cost
    c[PS] = sl.cost
    cones = [("zero", len(eq_b))]
    if in_b:
        cones.append(("nonneg", len(in_b)))
    cones += [("soc", 3)] * n_soc
    return ConicProgram(
        c=c,
        A=A,
        b=b,
        cones=tuple(cones),
        variable_map={
            "p": slice(P, P + n),
            "q": slice(Q, Q + n),
            "v": slice(V, V + n),
            "p_s": slice(PS, PS + 1),
            "q_s": slice(QS, QS + 1),
            "f_p": slice(FP, FP + n),
            "f_q": slice(FQ, FQ + n),
        },
    )


def write_reduced_csv(path, reduced: ReducedOpf) -> None:
    """Dump ``[label, M_p | M_q | G | h]`` rows, then ``c_tilde`` as the last row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# ldf-opf v1"])
        w.writerow(
            ["row", "label", "bus"]
            + [f"Mp_{b}" for b in reduced.gen_buses]
            + [f"Mq_{b}" for b in reduced.gen_buses]
            + [f"G_p_{b}" for b in reduced.load_buses]
            + [f"G_q_{b}" for b in reduced.load_buses]
            + ["h"]
        )
        for i, label in enumerate(reduced.row_labels):
            vals = np.concatenate([reduced.M_p[i], reduced.M_q[i], reduced.G[i], [reduced.h[i]]])
            w.writerow([i, label[0], label[1]] + [f"{v:.17g}" for v in vals])
        w.writerow(["c_tilde", "", ""] + [f"{v:.17g}" for v in reduced.c_tilde])
