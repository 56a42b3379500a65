"""Network cases for single-phase radial LinDistFlow studies.

A :class:`NetworkCase` holds per-unit data for one radial feeder. Voltage
bounds and the slack setpoint are *squared* magnitudes, demands are stored
positive-consumption. Cases are read from a subset of the MATPOWER v2 format
or from a native JSON document, and can be modified for experiments
(distributed-generation augmentation, flow limits frozen from a solution).
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Bus",
    "Branch",
    "Generator",
    "Slack",
    "NetworkCase",
    "RadialTopology",
    "CaseParseError",
    "CaseValidationError",
    "TopologyError",
    "NotRadialError",
    "DisconnectedError",
    "parse_matpower_case",
    "parse_native_case",
    "emit_native_case",
    "load_case",
    "builtin_case_path",
    "validate_case",
    "validate_radial",
    "augment_distributed_generation",
    "set_flow_limits_from_solution",
    "random_radial_case",
]

INF = math.inf
KINDS = ("slack", "generator", "load")


class CaseParseError(ValueError):
    """Raised when a case file cannot be read."""


class CaseValidationError(ValueError):
    """Raised when case data violates the model invariants."""


class TopologyError(ValueError):
    pass


class NotRadialError(TopologyError):
    pass


class DisconnectedError(TopologyError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    v_min: float
    v_max: float
    p_demand: float = 0.0
    q_demand: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    f_max: float = INF


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost: float


@dataclass(frozen=True)
class Slack:
    bus: int
    v0: float
    p_min: float = -INF
    p_max: float = INF
    q_min: float = -INF
    q_max: float = INF
    cost: float = 0.0


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    slack: Slack

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def branch(self, branch_id: int) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(branch_id)

    @property
    def load_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.kind == "load"]

    @property
    def generator_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.kind == "generator"]

    def replace(self, **changes) -> "NetworkCase":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class RadialTopology:
    """Directed spanning tree of a case, rooted at the slack bus.

    ``buses`` lists the non-slack buses in case order; that order indexes every
    matrix of the LinDistFlow model. Each branch is identified with the bus it
    feeds (``branch_of_bus``), and ``downstream[b]`` is the inclusive set of
    buses fed through bus ``b``.
    """

    slack: int
    buses: tuple[int, ...]
    orientation: Mapping[int, tuple[int, int]]
    parent: Mapping[int, int]
    parent_bus: Mapping[int, int]
    children: Mapping[int, tuple[int, ...]]
    branch_of_bus: Mapping[int, int]
    bus_of_branch: Mapping[int, int]
    downstream: Mapping[int, frozenset]
    path_to_slack: Mapping[int, tuple[int, ...]]
    order: tuple[int, ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.buses)

    def index(self, bus_id: int) -> int:
        return self.buses.index(bus_id)

    def branch_downstream(self, branch_id: int) -> frozenset:
        return self.downstream[self.bus_of_branch[branch_id]]

    @property
    def branches(self) -> tuple[int, ...]:
        """Branch ids ordered like ``buses`` (branch k feeds ``buses[k]``)."""
        return tuple(self.branch_of_bus[b] for b in self.buses)


# --------------------------------------------------------------------------
# validation


def validate_case(case: NetworkCase) -> NetworkCase:
    """Check the structural invariants of ``case`` and return it unchanged."""
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseValidationError(f"duplicate bus ids: {dup}")
    slacks = [b for b in case.buses if b.kind == "slack"]
    if len(slacks) != 1:
        raise CaseValidationError(f"expected exactly one slack bus, found {len(slacks)}")
    if slacks[0].id != case.slack.bus:
        raise CaseValidationError(
            f"slack record refers to bus {case.slack.bus} but bus {slacks[0].id} is the slack"
        )
    for b in case.buses:
        if b.kind not in KINDS:
            raise CaseValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
        if not b.v_min <= b.v_max:
            raise CaseValidationError(f"bus {b.id}: v_min > v_max")
    n_nonslack = len(case.buses) - 1
    if len(case.branches) != n_nonslack:
        raise CaseValidationError(
            f"{len(case.branches)} branches but {n_nonslack} non-slack buses; a radial case "
            "needs one branch per non-slack bus"
        )
    bids = [br.id for br in case.branches]
    if len(set(bids)) != len(bids):
        raise CaseValidationError("duplicate branch ids")
    idset = set(ids)
    for br in case.branches:
        if br.from_bus not in idset or br.to_bus not in idset:
            raise CaseValidationError(f"branch {br.id} refers to an unknown bus")
        if br.r < 0 or br.x < 0:
            raise CaseValidationError(f"branch {br.id}: negative impedance")
        if not br.f_max > 0:
            raise CaseValidationError(f"branch {br.id}: flow limit must be positive")
    gen_buses = [g.bus for g in case.generators]
    if len(set(gen_buses)) != len(gen_buses):
        raise CaseValidationError("more than one generator on a bus")
    kinds = {b.id: b.kind for b in case.buses}
    for g in case.generators:
        if kinds.get(g.bus) != "generator":
            raise CaseValidationError(f"generator at bus {g.bus}, which is not a generator bus")
        if not (g.p_min <= g.p_max and g.q_min <= g.q_max):
            raise CaseValidationError(f"generator at bus {g.bus}: inverted bounds")
    missing = set(case.generator_buses) - set(gen_buses)
    if missing:
        raise CaseValidationError(f"generator buses without a generator record: {sorted(missing)}")
    for b in case.buses:
        if b.kind == "generator" and (b.p_demand or b.q_demand):
            raise CaseValidationError(f"bus {b.id} carries both generation and load")
    s = case.slack
    if not (s.p_min <= s.p_max and s.q_min <= s.q_max):
        raise CaseValidationError("slack: inverted bounds")
    return case


def validate_radial(case: NetworkCase) -> RadialTopology:
    """Orient the branches away from the slack and compute downstream sets.

    Raises :class:`NotRadialError` when the branch graph has a cycle and
    :class:`DisconnectedError` when some bus cannot be reached from the slack.
    """
    root = case.slack.bus
    adj: dict[int, list[tuple[int, Branch]]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        if br.from_bus not in adj or br.to_bus not in adj:
            raise CaseValidationError(f"branch {br.id} refers to an unknown bus")
        if br.from_bus == br.to_bus:
            raise NotRadialError(f"branch {br.id} is a self loop")
        adj[br.from_bus].append((br.to_bus, br))
        adj[br.to_bus].append((br.from_bus, br))

    parent: dict[int, int] = {}
    parent_bus: dict[int, int] = {}
    orientation: dict[int, tuple[int, int]] = {}
    seen = {root}
    order = [root]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, br in adj[u]:
            if br.id == parent.get(u):
                continue
            if v in seen:
                raise NotRadialError(f"branch {br.id} closes a loop through bus {v}")
            seen.add(v)
            parent[v] = br.id
            parent_bus[v] = u
            orientation[br.id] = (u, v)
            order.append(v)
            queue.append(v)
    unreached = [b.id for b in case.buses if b.id not in seen]
    if unreached:
        raise DisconnectedError(f"buses not connected to the slack: {unreached}")

    children: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for v, bid in parent.items():
        children[parent_bus[v]].append(bid)

    downstream: dict[int, set] = {}
    for v in reversed(order):
        h = {v}
        for bid in children[v]:
            h |= downstream[orientation[bid][1]]
        downstream[v] = h

    path: dict[int, tuple[int, ...]] = {root: ()}
    for v in order[1:]:
        path[v] = (parent[v],) + path[parent_bus[v]]

    buses = tuple(b.id for b in case.buses if b.id != root)
    return RadialTopology(
        slack=root,
        buses=buses,
        orientation=orientation,
        parent=parent,
        parent_bus=parent_bus,
        children={k: tuple(v) for k, v in children.items()},
        branch_of_bus=dict(parent),
        bus_of_branch={bid: v for v, bid in parent.items()},
        downstream={k: frozenset(v) for k, v in downstream.items() if k != root},
        path_to_slack={k: v for k, v in path.items() if k != root},
        order=tuple(order),
    )


# --------------------------------------------------------------------------
# MATPOWER subset

_BLOCK_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_SCALAR_RE = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([^;%]+)")


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _read_blocks(text: str) -> tuple[float | None, dict[str, list[tuple[int, list[float]]]]]:
    base = None
    blocks: dict[str, list[tuple[int, list[float]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if current is None:
            m = _SCALAR_RE.match(line)
            if m:
                try:
                    base = float(m.group(1))
                except ValueError:
                    raise CaseParseError(f"line {lineno}: bad baseMVA value {m.group(1)!r}") from None
                continue
            m = _BLOCK_RE.match(line)
            if not m:
                continue
            current = m.group(1)
            blocks[current] = []
            line = m.group(2)
        end = "]" in line
        body = line.split("]", 1)[0]
        for chunk in body.split(";"):
            tokens = chunk.replace(",", " ").split()
            if not tokens:
                continue
            try:
                blocks[current].append((lineno, [float(t) for t in tokens]))
            except ValueError:
                raise CaseParseError(
                    f"line {lineno}: malformed row in mpc.{current}: {chunk.strip()!r}"
                ) from None
        if end:
            current = None
    if current is not None:
        raise CaseParseError(f"mpc.{current} block is not terminated")
    return base, blocks


def _require_width(block: str, rows, width: int):
    for lineno, row in rows:
        if len(row) < width:
            raise CaseParseError(
                f"line {lineno}: mpc.{block} row has {len(row)} columns, need at least {width}"
            )


def _limit(value: float, base: float, default: float) -> float:
    if abs(value) >= 9999:
        return default
    return value / base


def parse_matpower_case(text: str) -> NetworkCase:
    """Read the ``mpc.baseMVA/bus/branch/gen/gencost`` blocks of a MATPOWER case.

    Squared voltage bounds come from VMIN/VMAX, generator (PV) buses are
    pinned at VG squared, RATE_A = 0 means an unbounded branch and only the
    linear gencost term is kept.
    """
    base, blocks = _read_blocks(text)
    if base is None:
        raise CaseParseError("missing mpc.baseMVA")
    for name in ("bus", "branch", "gen"):
        if name not in blocks:
            raise CaseParseError(f"missing mpc.{name} block")
    _require_width("bus", blocks["bus"], 13)
    _require_width("branch", blocks["branch"], 11)
    _require_width("gen", blocks["gen"], 10)

    bus_rows = blocks["bus"]
    ids = [int(r[0]) for _, r in bus_rows]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseValidationError(f"duplicate bus ids: {dup}")
    bus_by_id = {int(r[0]): (ln, r) for ln, r in bus_rows}

    gencost = blocks.get("gencost", [])
    gens = []
    for k, (ln, g) in enumerate(blocks["gen"]):
        if g[7] <= 0:
            continue
        cost = 0.0
        if k < len(gencost):
            cln, c = gencost[k]
            if int(c[0]) != 2:
                raise CaseValidationError(f"line {cln}: only polynomial gencost is supported")
            ncoef = int(c[3])
            coefs = c[4 : 4 + ncoef]
            cost = coefs[-2] * base if ncoef >= 2 else 0.0
        gens.append((ln, g, cost))

    slack_ids = [i for i, (_, r) in bus_by_id.items() if int(r[1]) == 3]
    if len(slack_ids) != 1:
        raise CaseValidationError(f"expected exactly one reference bus, found {len(slack_ids)}")
    slack_id = slack_ids[0]

    gen_at: dict[int, tuple] = {}
    for ln, g, cost in gens:
        b = int(g[0])
        if b not in bus_by_id:
            raise CaseValidationError(f"line {ln}: generator at unknown bus {b}")
        if b in gen_at:
            raise CaseValidationError(f"line {ln}: more than one generator at bus {b}")
        gen_at[b] = (ln, g, cost)

    buses = []
    generators = []
    slack = None
    for bid in ids:
        ln, r = bus_by_id[bid]
        btype = int(r[1])
        pd, qd = r[2] / base, r[3] / base
        if r[4] != 0 or r[5] != 0:
            raise CaseValidationError(f"line {ln}: bus shunts are not supported")
        vmin, vmax = r[12] ** 2, r[11] ** 2
        if bid == slack_id:
            if bid in gen_at:
                _, g, cost = gen_at[bid]
                v0 = g[5] ** 2
                slack = Slack(
                    bus=bid,
                    v0=v0,
                    p_min=_limit(g[9], base, -INF),
                    p_max=_limit(g[8], base, INF),
                    q_min=_limit(g[4], base, -INF),
                    q_max=_limit(g[3], base, INF),
                    cost=cost,
                )
            else:
                v0 = r[7] ** 2
                slack = Slack(bus=bid, v0=v0)
            if pd or qd:
                raise CaseValidationError(f"line {ln}: load at the slack bus is not supported")
            buses.append(Bus(bid, "slack", v0, v0))
            continue
        if bid in gen_at:
            gln, g, cost = gen_at[bid]
            if pd or qd:
                raise CaseValidationError(
                    f"line {ln}: bus {bid} has both a generator and a load; split it into two buses"
                )
            if btype == 2:
                vg = g[5]
                if not r[12] <= vg <= r[11]:
                    raise CaseValidationError(
                        f"line {gln}: voltage setpoint {vg} of bus {bid} outside [{r[12]}, {r[11]}]"
                    )
                vmin = vmax = vg**2
            buses.append(Bus(bid, "generator", vmin, vmax))
            generators.append(
                Generator(
                    bus=bid,
                    p_min=_limit(g[9], base, -INF),
                    p_max=_limit(g[8], base, INF),
                    q_min=_limit(g[4], base, -INF),
                    q_max=_limit(g[3], base, INF),
                    cost=cost,
                )
            )
        else:
            if btype == 2:
                raise CaseValidationError(f"line {ln}: PV bus {bid} has no generator")
            buses.append(Bus(bid, "load", vmin, vmax, pd, qd))

    branches = []
    for k, (ln, r) in enumerate(blocks["branch"], start=1):
        if r[10] <= 0:
            raise CaseValidationError(f"line {ln}: out-of-service branches are not supported")
        tap = r[8] if len(r) > 8 else 0.0
        shift = r[9] if len(r) > 9 else 0.0
        if tap not in (0.0, 1.0) or shift != 0.0:
            raise CaseValidationError(f"line {ln}: transformer taps are not supported")
        f_max = r[5] / base if r[5] > 0 else INF
        branches.append(Branch(k, int(r[0]), int(r[1]), r[2], r[3], f_max))

    return validate_case(
        NetworkCase(
            base_mva=base,
            buses=tuple(buses),
            branches=tuple(branches),
            generators=tuple(generators),
            slack=slack,
        )
    )


# --------------------------------------------------------------------------
# native JSON


def _num(x: float):
    return None if math.isinf(x) else float(x)


def _inf(value, sign: float = 1.0) -> float:
    return sign * INF if value is None else float(value)


def emit_native_case(case: NetworkCase) -> str:
    """Serialize ``case`` as the native JSON document (infinite values as null)."""
    doc = {
        "base_mva": case.base_mva,
        "slack": {
            "bus": case.slack.bus,
            "v0": case.slack.v0,
            "p_min": _num(case.slack.p_min),
            "p_max": _num(case.slack.p_max),
            "q_min": _num(case.slack.q_min),
            "q_max": _num(case.slack.q_max),
            "cost": case.slack.cost,
        },
        "buses": [dataclasses.asdict(b) for b in case.buses],
        "branches": [
            {**dataclasses.asdict(br), "f_max": _num(br.f_max)} for br in case.branches
        ],
        "generators": [
            {
                "bus": g.bus,
                "p_min": _num(g.p_min),
                "p_max": _num(g.p_max),
                "q_min": _num(g.q_min),
                "q_max": _num(g.q_max),
                "cost": g.cost,
            }
            for g in case.generators
        ],
    }
    return json.dumps(doc, indent=1)


def _field(obj: Mapping, name: str, where: str):
    if not isinstance(obj, Mapping):
        raise CaseParseError(f"{where}: expected an object")
    if name not in obj:
        raise CaseParseError(f"{where}: missing field {name!r}")
    return obj[name]


def _real(obj, name, where, *, nullable=False, default_sign=1.0) -> float:
    v = _field(obj, name, where)
    if v is None and nullable:
        return default_sign * INF
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseParseError(f"{where}.{name}: expected a number, got {v!r}")
    return float(v)


def _int(obj, name, where) -> int:
    v = _field(obj, name, where)
    if isinstance(v, bool) or not isinstance(v, int):
        raise CaseParseError(f"{where}.{name}: expected an integer, got {v!r}")
    return v


def parse_native_case(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise CaseParseError("top level: expected an object")
    base = _real(doc, "base_mva", "case")
    s = _field(doc, "slack", "case")
    slack = Slack(
        bus=_int(s, "bus", "slack"),
        v0=_real(s, "v0", "slack"),
        p_min=_real(s, "p_min", "slack", nullable=True, default_sign=-1),
        p_max=_real(s, "p_max", "slack", nullable=True),
        q_min=_real(s, "q_min", "slack", nullable=True, default_sign=-1),
        q_max=_real(s, "q_max", "slack", nullable=True),
        cost=_real(s, "cost", "slack"),
    )
    buses = []
    for k, b in enumerate(_field(doc, "buses", "case")):
        w = f"buses[{k}]"
        kind = _field(b, "kind", w)
        if kind not in KINDS:
            raise CaseParseError(f"{w}.kind: expected one of {KINDS}, got {kind!r}")
        buses.append(
            Bus(
                id=_int(b, "id", w),
                kind=kind,
                v_min=_real(b, "v_min", w),
                v_max=_real(b, "v_max", w),
                p_demand=_real(b, "p_demand", w),
                q_demand=_real(b, "q_demand", w),
            )
        )
    branches = []
    for k, br in enumerate(_field(doc, "branches", "case")):
        w = f"branches[{k}]"
        branches.append(
            Branch(
                id=_int(br, "id", w),
                from_bus=_int(br, "from_bus", w),
                to_bus=_int(br, "to_bus", w),
                r=_real(br, "r", w),
                x=_real(br, "x", w),
                f_max=_real(br, "f_max", w, nullable=True),
            )
        )
    gens = []
    for k, g in enumerate(_field(doc, "generators", "case")):
        w = f"generators[{k}]"
        gens.append(
            Generator(
                bus=_int(g, "bus", w),
                p_min=_real(g, "p_min", w, nullable=True, default_sign=-1),
                p_max=_real(g, "p_max", w, nullable=True),
                q_min=_real(g, "q_min", w, nullable=True, default_sign=-1),
                q_max=_real(g, "q_max", w, nullable=True),
                cost=_real(g, "cost", w),
            )
        )
    return validate_case(
        NetworkCase(base, tuple(buses), tuple(branches), tuple(gens), slack)
    )


_DATA = Path(__file__).resolve().parent / "data"


def builtin_case_path(name: str) -> Path:
    """Path of a case shipped with the package (``case4``, ``case141``)."""
    for suffix in (".m", ".json"):
        p = _DATA / f"{name}{suffix}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no built-in case named {name!r}")


def load_case(path: str | Path) -> NetworkCase:
    """Read a case from disk, choosing the parser by extension.

    A bare name such as ``"case141"`` resolves to a bundled case.
    """
    p = Path(path)
    if not p.exists() and p.suffix == "" and not p.parent.parts:
        p = builtin_case_path(str(path))
    text = p.read_text()
    if p.suffix.lower() == ".json":
        return parse_native_case(text)
    return parse_matpower_case(text)


# --------------------------------------------------------------------------
# experiment preparation


def augment_distributed_generation(
    case: NetworkCase,
    count: int,
    p_max: float,
    q_mag: float,
    cost_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
    *,
    exclude: Iterable[int] = (),
    zero_demand_only: bool = True,
) -> NetworkCase:
    """Turn ``count`` randomly chosen load buses into generator buses.

    Candidates are the load buses not in ``exclude`` (by default only those
    with zero demand, so every load of the original case is kept). They are
    shuffled with ``numpy.random.Generator(PCG64(seed))`` and the first
    ``count`` are taken; costs are then drawn uniformly from ``cost_range`` in
    the order of the chosen buses. If the slack is not already more expensive
    than every drawn cost, its cost is raised to ``cost_range[1] + 1``.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return case
    excluded = set(exclude)
    cands = [
        b.id
        for b in case.buses
        if b.kind == "load"
        and b.id not in excluded
        and (not zero_demand_only or (b.p_demand == 0 and b.q_demand == 0))
    ]
    if count > len(cands):
        raise ValueError(f"asked for {count} generator buses but only {len(cands)} candidates")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(cands))
    chosen = [cands[i] for i in order[:count]]
    lo, hi = cost_range
    costs = rng.uniform(lo, hi, size=count)
    chosen_set = set(chosen)
    buses = tuple(
        Bus(b.id, "generator", b.v_min, b.v_max) if b.id in chosen_set else b for b in case.buses
    )
    new_gens = {
        bid: Generator(bid, 0.0, p_max, -q_mag, q_mag, float(c)) for bid, c in zip(chosen, costs)
    }
    gens = list(case.generators) + [new_gens[b.id] for b in case.buses if b.id in new_gens]
    gens.sort(key=lambda g: [b.id for b in case.buses].index(g.bus))
    slack = case.slack
    top = max(g.cost for g in gens)
    if slack.cost <= top:
        slack = dataclasses.replace(slack, cost=float(hi) + 1.0)
    return validate_case(case.replace(buses=buses, generators=tuple(gens), slack=slack))


def set_flow_limits_from_solution(
    case: NetworkCase,
    flows: Mapping[int, tuple[float, float]],
    branches: Iterable[int],
) -> NetworkCase:
    """Set ``f_max`` of each listed branch to the magnitude of its setpoint flow."""
    branches = list(branches)
    known = {br.id for br in case.branches}
    bad = [b for b in branches if b not in known]
    if bad:
        raise ValueError(f"unknown branch ids: {bad}")
    if not branches:
        return case
    limits = {}
    for bid in branches:
        fp, fq = flows[bid]
        limits[bid] = float(math.hypot(fp, fq))
    new = tuple(
        dataclasses.replace(br, f_max=limits[br.id]) if br.id in limits else br
        for br in case.branches
    )
    return case.replace(branches=new)


def random_radial_case(
    n: int,
    seed: int = 0,
    *,
    gen_fraction: float = 0.3,
    limit_fraction: float = 0.0,
    limit_value: float = 0.1,
    v_band: tuple[float, float] = (0.9**2, 1.1**2),
    shuffle_orientation: bool = True,
) -> NetworkCase:
    """Random radial test feeder with ``n`` non-slack buses.

    Every bus attaches to a uniformly chosen earlier bus. Roughly
    ``gen_fraction`` of the buses host a generator. ``limit_fraction`` of the
    branches receive a flow limit of ``limit_value``.
    """
    rng = np.random.default_rng(seed)
    ids = list(range(n + 1))
    n_gen = max(1, int(round(gen_fraction * n))) if n > 1 else 0
    gen_set = set(int(i) + 1 for i in rng.choice(n, size=n_gen, replace=False)) if n_gen else set()
    buses = [Bus(0, "slack", 1.0, 1.0)]
    gens = []
    for i in ids[1:]:
        if i in gen_set:
            buses.append(Bus(i, "generator", v_band[0], v_band[1]))
            pmax = float(rng.uniform(0.05, 0.2))
            qmag = float(rng.uniform(0.02, 0.1))
            gens.append(Generator(i, 0.0, pmax, -qmag, qmag, float(rng.uniform(0.0, 1.0))))
        else:
            buses.append(
                Bus(
                    i,
                    "load",
                    v_band[0],
                    v_band[1],
                    float(rng.uniform(0.0, 0.08)),
                    float(rng.uniform(0.0, 0.04)),
                )
            )
    branches = []
    for i in ids[1:]:
        parent = int(rng.integers(0, i))
        a, b = (parent, i)
        if shuffle_orientation and rng.random() < 0.5:
            a, b = b, a
        f_max = limit_value if rng.random() < limit_fraction else INF
        branches.append(
            Branch(i, a, b, float(rng.uniform(0.001, 0.01)), float(rng.uniform(0.001, 0.01)), f_max)
        )
    slack = Slack(0, 1.0, -10.0, 10.0, -10.0, 10.0, 2.0)
    return validate_case(NetworkCase(1.0, tuple(buses), tuple(branches), tuple(gens), slack))
