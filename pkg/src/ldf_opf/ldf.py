"""LinDistFlow sensitivity matrices.

With ``p``, ``q`` the injections of the non-slack buses (ordered as
``RadialTopology.buses``), the lossless model reads

    v = R p + X q + v0,        f_p = F p,        f_q = F q

where row ``k`` of ``F`` belongs to the branch feeding bus ``k``. ``F`` and
``R``/``X`` are built from path sets directly; no matrix is inverted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcase import NetworkCase, RadialTopology

__all__ = [
    "LdfModel",
    "build_incidence",
    "build_F",
    "build_RX",
    "branch_coefficients",
    "build_ldf",
    "write_matrix_csv",
]


@dataclass(frozen=True)
class LdfModel:
    buses: tuple[int, ...]
    branches: tuple[int, ...]
    gen_buses: tuple[int, ...]
    load_buses: tuple[int, ...]
    R: np.ndarray
    X: np.ndarray
    F: np.ndarray
    v0: float
    A_g: np.ndarray
    A_l: np.ndarray
    r: np.ndarray
    s: np.ndarray
    t: np.ndarray

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def n_g(self) -> int:
        return len(self.gen_buses)

    @property
    def n_l(self) -> int:
        return len(self.load_buses)

    def injections(self, p_g, q_g, ell):
        """Full injection vectors ``p``, ``q`` from dispatch and load injections."""
        ell = np.asarray(ell, dtype=float)
        p = self.A_g.T @ np.asarray(p_g, dtype=float) + self.A_l.T @ ell[: self.n_l]
        q = self.A_g.T @ np.asarray(q_g, dtype=float) + self.A_l.T @ ell[self.n_l :]
        return p, q

    def voltages(self, p, q):
        return self.R @ p + self.X @ q + self.v0

    def flows(self, p, q):
        return self.F @ p, self.F @ q


def build_incidence(topology: RadialTopology) -> tuple[np.ndarray, np.ndarray]:
    """Signed branch-bus incidence ``A_tilde`` (n x n+1) and its square part ``A``.

    Column 0 is the slack bus, column ``k+1`` is ``topology.buses[k]``. Row
    ``i`` is the branch feeding ``topology.buses[i]``: +1 where it starts, -1
    where it ends.
    """
    n = topology.n
    col = {topology.slack: 0}
    col.update({b: k + 1 for k, b in enumerate(topology.buses)})
    At = np.zeros((n, n + 1))
    for i, bus in enumerate(topology.buses):
        start, end = topology.orientation[topology.branch_of_bus[bus]]
        At[i, col[start]] = 1.0
        At[i, col[end]] = -1.0
    return At, At[:, 1:].copy()


def build_F(topology: RadialTopology) -> np.ndarray:
    """Flow matrix: ``F[i, j] = -1`` iff bus ``j`` lies downstream of branch ``i``."""
    idx = {b: k for k, b in enumerate(topology.buses)}
    F = np.zeros((topology.n, topology.n))
    for i, bus in enumerate(topology.buses):
        F[i, [idx[j] for j in topology.downstream[bus]]] = -1.0
    return F


def build_RX(case: NetworkCase, topology: RadialTopology) -> tuple[np.ndarray, np.ndarray]:
    """``R[i, j]`` is twice the resistance of the path shared by buses i and j to the slack.

    Equivalently ``R = 2 F' diag(r) F``. Accumulated branch by branch: every
    bus pair inside a downstream set shares that set's feeding branch.
    """
    idx = {b: k for k, b in enumerate(topology.buses)}
    n = topology.n
    R = np.zeros((n, n))
    X = np.zeros((n, n))
    for br in case.branches:
        members = [idx[j] for j in topology.branch_downstream(br.id)]
        cell = np.ix_(members, members)
        R[cell] += 2.0 * br.r
        X[cell] += 2.0 * br.x
    return R, X


def _selectors(topology: RadialTopology, case: NetworkCase):
    kind = {b.id: b.kind for b in case.buses}
    gens = tuple(b for b in topology.buses if kind[b] == "generator")
    loads = tuple(b for b in topology.buses if kind[b] == "load")
    idx = {b: k for k, b in enumerate(topology.buses)}
    A_g = np.zeros((len(gens), topology.n))
    A_l = np.zeros((len(loads), topology.n))
    A_g[np.arange(len(gens)), [idx[b] for b in gens]] = 1.0
    A_l[np.arange(len(loads)), [idx[b] for b in loads]] = 1.0
    return gens, loads, A_g, A_l


def branch_coefficients(F: np.ndarray, A_g: np.ndarray, A_l: np.ndarray):
    """Per-branch flow coefficients, one row per branch.

    ``r[j]`` acts on the generator dispatch, ``s[j]`` on the real half of the
    load vector ``[p_l; q_l]`` and ``t[j]`` on its reactive half.
    """
    n_l = A_l.shape[0]
    r = F @ A_g.T
    fl = F @ A_l.T
    s = np.hstack([fl, np.zeros_like(fl)])
    t = np.hstack([np.zeros_like(fl), fl])
    assert s.shape[1] == 2 * n_l
    return r, s, t


def build_ldf(case: NetworkCase, topology: RadialTopology) -> LdfModel:
    R, X = build_RX(case, topology)
    F = build_F(topology)
    gens, loads, A_g, A_l = _selectors(topology, case)
    r, s, t = branch_coefficients(F, A_g, A_l)
    return LdfModel(
        buses=topology.buses,
        branches=topology.branches,
        gen_buses=gens,
        load_buses=loads,
        R=R,
        X=X,
        F=F,
        v0=case.slack.v0,
        A_g=A_g,
        A_l=A_l,
        r=r,
        s=s,
        t=t,
    )


def write_matrix_csv(path, M: np.ndarray) -> None:
    """Row-major CSV dump with 17 significant digits."""
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")
