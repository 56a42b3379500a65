import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldf_opf.netcase import (
    Branch,
    CaseParseError,
    CaseValidationError,
    DisconnectedError,
    NotRadialError,
    augment_distributed_generation,
    builtin_case_path,
    emit_native_case,
    load_case,
    parse_matpower_case,
    parse_native_case,
    random_radial_case,
    set_flow_limits_from_solution,
    validate_case,
    validate_radial,
)

CASE4_M = builtin_case_path("case4").read_text()


def _edit_line(text, startswith, new):
    lines = text.splitlines()
    for i, ln in enumerate(lines):
        if ln.strip().startswith(startswith):
            lines[i] = new
            return "\n".join(lines)
    raise AssertionError(startswith)


def test_case4_parses_to_expected_structure(case4):
    assert [b.id for b in case4.buses] == [0, 1, 2, 3]
    assert [b.kind for b in case4.buses] == ["slack", "generator", "load", "load"]
    assert case4.slack.v0 == pytest.approx(1.05, abs=1e-12)
    assert case4.slack.p_max == 1.0
    assert case4.bus(1).v_min == pytest.approx(1.05) and case4.bus(1).v_max == pytest.approx(1.05)
    assert case4.bus(2).v_min == pytest.approx(0.95)
    assert case4.bus(3).p_demand == 0.4 and case4.bus(3).q_demand == 0.2
    assert [(br.id, br.from_bus, br.to_bus) for br in case4.branches] == [(1, 2, 1), (2, 0, 2), (3, 0, 3)]
    assert all(math.isinf(br.f_max) for br in case4.branches)
    (g,) = case4.generators
    assert (g.bus, g.p_min, g.p_max, g.cost) == (1, 0.0, 0.5, 10.0)
    assert case4.slack.cost == 20.0


def test_json_fixture_matches_matpower_fixture(case4):
    js = load_case(builtin_case_path("case4").with_suffix(".json"))
    # the .m file stores magnitudes, so squared bounds differ in the last bits
    for a, b in zip(js.buses, case4.buses, strict=True):
        assert (a.id, a.kind, a.p_demand, a.q_demand) == (b.id, b.kind, b.p_demand, b.q_demand)
        assert math.isclose(a.v_min, b.v_min, rel_tol=1e-14) and math.isclose(a.v_max, b.v_max, rel_tol=1e-14)
    assert js.branches == case4.branches
    assert js.generators == case4.generators


def test_native_round_trip(case4):
    again = parse_native_case(emit_native_case(case4))
    assert again == case4


def test_native_round_trip_keeps_infinite_bounds():
    case = random_radial_case(12, seed=4, limit_fraction=0.5)
    assert parse_native_case(emit_native_case(case)) == case


def test_rate_a_sets_flow_limit():
    text = _edit_line(CASE4_M, "0\t2\t0.003", "\t0\t2\t0.003\t0.006\t0\t3\t0\t0\t0\t0\t1\t-360\t360;")
    case = parse_matpower_case(text)
    assert case.branch(2).f_max == 3.0


def test_missing_block_reports_name():
    text = CASE4_M.replace("mpc.gen = [", "mpc.genx = [")
    with pytest.raises(CaseParseError, match="mpc.gen"):
        parse_matpower_case(text)


def test_short_row_reports_line_number():
    text = _edit_line(CASE4_M, "3\t1\t0.4", "\t3\t1\t0.4\t0.2;")
    with pytest.raises(CaseParseError, match=r"line \d+"):
        parse_matpower_case(text)


def test_shunt_rejected():
    text = _edit_line(
        CASE4_M, "3\t1\t0.4",
        "\t3\t1\t0.4\t0.2\t0.1\t0\t1\t1\t0\t12.5\t1\t1.02469507659596\t0.9746794344808963;",
    )
    with pytest.raises(CaseValidationError, match="shunt"):
        parse_matpower_case(text)


def test_tap_rejected():
    text = _edit_line(CASE4_M, "0\t3\t0.003", "\t0\t3\t0.003\t0.006\t0\t0\t0\t0\t0.95\t0\t1\t-360\t360;")
    with pytest.raises(CaseValidationError, match="tap"):
        parse_matpower_case(text)


def test_generator_and_load_on_one_bus_rejected():
    text = _edit_line(
        CASE4_M, "1\t2\t0",
        "\t1\t2\t0.1\t0\t0\t0\t1\t1.02469507659596\t0\t12.5\t1\t1.02469507659596\t0.9746794344808963;",
    )
    with pytest.raises(CaseValidationError, match="both a generator and a load"):
        parse_matpower_case(text)


def test_negative_resistance_rejected(case4):
    bad = case4.replace(branches=(dataclasses.replace(case4.branches[0], r=-0.003),) + case4.branches[1:])
    with pytest.raises(CaseValidationError, match="negative impedance"):
        validate_case(bad)


def test_two_slacks_rejected(case4):
    buses = list(case4.buses)
    buses[3] = dataclasses.replace(buses[3], kind="slack")
    with pytest.raises(CaseValidationError, match="one slack"):
        validate_case(case4.replace(buses=tuple(buses)))


def test_loop_detected(case4):
    # right branch count, but 2-1-... forms a triangle with 0-2 and 0-1 while bus 3 hangs loose
    branches = (
        Branch(1, 2, 1, 0.003, 0.006),
        Branch(2, 0, 2, 0.003, 0.006),
        Branch(3, 0, 1, 0.003, 0.006),
    )
    with pytest.raises(NotRadialError):
        validate_radial(case4.replace(branches=branches))


def test_disconnected_bus_detected(case4):
    branches = (
        Branch(1, 2, 1, 0.003, 0.006),
        Branch(2, 0, 2, 0.003, 0.006),
        Branch(3, 3, 3, 0.003, 0.006),
    )
    with pytest.raises((DisconnectedError, NotRadialError)):
        validate_radial(case4.replace(branches=branches))


def test_case4_topology(case4):
    topo = validate_radial(case4)
    assert topo.slack == 0
    assert topo.buses == (1, 2, 3)
    assert topo.orientation[1] == (2, 1)
    assert topo.branch_of_bus == {1: 1, 2: 2, 3: 3}
    assert topo.downstream[2] == frozenset({1, 2})
    assert topo.downstream[1] == frozenset({1})
    assert topo.path_to_slack[1] == (1, 2)


def test_orientation_flipped_in_file_is_reoriented(case4):
    flipped = case4.replace(branches=(Branch(1, 1, 2, 0.003, 0.006),) + case4.branches[1:])
    topo = validate_radial(flipped)
    assert topo.orientation[1] == (2, 1)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 60), seed=st.integers(0, 10_000))
def test_path_sets_agree_with_downstream_sets(n, seed):
    case = random_radial_case(n, seed)
    topo = validate_radial(case)
    for bus in topo.buses:
        for bid in topo.path_to_slack[bus]:
            assert bus in topo.branch_downstream(bid)
        for bid in set(topo.branches) - set(topo.path_to_slack[bus]):
            assert bus not in topo.branch_downstream(bid)


def test_case141_bundle():
    case = load_case("case141")
    topo = validate_radial(case)
    assert topo.n == 140
    assert case.generators == ()
    assert sum(b.p_demand for b in case.buses) == pytest.approx(1.1944625, rel=1e-9)
    assert topo.bus_of_branch[16] == 17 and topo.bus_of_branch[18] == 19
    assert case.bus(20).kind == "load"


def test_augmentation_is_seeded_and_respects_bounds():
    base = load_case("case141")
    a = augment_distributed_generation(base, 25, 0.0654, 0.027, seed=3, exclude=(20,))
    b = augment_distributed_generation(base, 25, 0.0654, 0.027, seed=3, exclude=(20,))
    c = augment_distributed_generation(base, 25, 0.0654, 0.027, seed=4, exclude=(20,))
    assert a == b
    assert a.generator_buses != c.generator_buses
    assert len(a.generators) == 25
    assert 20 not in a.generator_buses
    for g in a.generators:
        assert (g.p_min, g.p_max, g.q_min, g.q_max) == (0.0, 0.0654, -0.027, 0.027)
        assert 0.0 <= g.cost <= 1.0
        assert base.bus(g.bus).p_demand == 0 and base.bus(g.bus).q_demand == 0
    assert a.slack.cost > max(g.cost for g in a.generators)


def test_augmentation_raises_slack_cost_when_needed(case4):
    out = augment_distributed_generation(
        case4.replace(slack=dataclasses.replace(case4.slack, cost=0.5)), 1, 0.1, 0.05, seed=0,
        zero_demand_only=False,
    )
    assert out.slack.cost == 2.0


def test_augmentation_rejects_too_many(case4):
    with pytest.raises(ValueError):
        augment_distributed_generation(case4, 5, 0.1, 0.1)


def test_flow_limits_from_setpoints(case4):
    out = set_flow_limits_from_solution(case4, {2: (0.3, -0.4)}, [2])
    assert out.branch(2).f_max == pytest.approx(0.5)
    assert math.isinf(out.branch(1).f_max)
    with pytest.raises(ValueError):
        set_flow_limits_from_solution(case4, {}, [9])


def test_random_case_is_deterministic_and_valid():
    a = random_radial_case(30, seed=11)
    assert a == random_radial_case(30, seed=11)
    assert a != random_radial_case(30, seed=12)
    topo = validate_radial(a)
    assert topo.n == 30
    assert len(a.generators) == 9
    assert np.all([b.v_min < b.v_max for b in a.buses if b.kind != "slack"])
