import dataclasses
import math

import numpy as np
import pytest

from ldf_opf.conic_solver import solve_opf
from ldf_opf.marginals import (
    DegeneracyWarning,
    binding_set,
    bound_constant,
    fd_gradient_oracle,
    flow_marginal_costs,
    load_marginal_costs,
    marginal_report,
    theorem1_check,
    write_marginals_csv,
)

# Hand derivation for the 4-bus feeder with branch 2 limited to f:
# bus 1 sits at v0, so p + 2q = 0.4 (with the given loads), and the branch-2
# flow is the offset (p - 0.4, q - 0.2). Writing a = p - 0.4, b = q - 0.2 and
# c = 0.5 l_p2 + l_q2, the best dispatch is a = (c + 2 sqrt(5 f^2 - c^2)) / 5.
# At f = 0.2: p = 0.4, q = 0, J = 12, dJ/df = -20,
# dJ/dl = [5, 0, -10, 0] and the limit binds only below |(0.1, -0.25)|.
F_FREE = math.hypot(0.1, 0.25)
F_MIN = 0.4 / math.sqrt(5)


def limited(red, f):
    lim = red.f_max.copy()
    lim[red.branch_index(2)] = f
    return red.with_params(f_max=lim)


def value(f):
    c = -0.4
    a = (c + 2 * math.sqrt(5 * f * f - c * c)) / 5
    return -10 * (a + 0.4) + 16.0


@pytest.fixture(scope="module")
def congested(case4_reduced):
    return solve_opf(limited(case4_reduced, 0.2))


def test_unconstrained_oracle(case4_reduced):
    sol = solve_opf(case4_reduced)
    assert sol.p_g[0] == pytest.approx(0.5, abs=1e-8)
    assert sol.q_g[0] == pytest.approx(-0.05, abs=1e-8)
    assert sol.J == pytest.approx(11.0, abs=1e-8)
    rep = marginal_report(sol)
    assert rep.binding_set == frozenset()
    assert rep.K == 0.0 and rep.bound_value == 0.0
    np.testing.assert_allclose(rep.C_load, 0.0, atol=1e-9)


def test_congested_oracle(congested):
    sol = congested
    assert sol.p_g[0] == pytest.approx(0.4, abs=1e-8)
    assert sol.q_g[0] == pytest.approx(0.0, abs=1e-8)
    assert sol.J == pytest.approx(12.0, abs=1e-8)
    assert sol.dual.mu[1] == pytest.approx(20.0, abs=1e-6)
    np.testing.assert_allclose(flow_marginal_costs(sol.dual), [0.0, -20.0, 0.0], atol=1e-6)


def test_congested_report(congested):
    rep = marginal_report(congested)
    assert rep.binding_set == frozenset({2})
    assert rep.K == pytest.approx(math.sqrt(2), abs=1e-15)
    assert rep.bound_value == pytest.approx(20 * math.sqrt(2), abs=1e-5)
    np.testing.assert_allclose(rep.C_load, [5.0, 0.0, -10.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(rep.baseline, 0.0, atol=1e-9)
    assert rep.flow[1] == pytest.approx(0.2, abs=1e-8)


@pytest.mark.parametrize("f", [0.19, 0.2, 0.22, 0.25])
def test_value_curve(case4_reduced, f):
    assert solve_opf(limited(case4_reduced, f)).J == pytest.approx(value(f), abs=1e-7)


def test_bound_constant(case4_reduced):
    assert bound_constant(case4_reduced, [2]) == pytest.approx(math.sqrt(2))
    assert bound_constant(case4_reduced, [1]) == 0.0
    assert bound_constant(case4_reduced, [1, 2, 3]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError, match="nonempty"):
        bound_constant(case4_reduced, [])


def test_load_costs_all_vs_binding(congested, case4_reduced):
    full, base = load_marginal_costs(congested.dual, congested.reduced)
    only, _ = load_marginal_costs(congested.dual, congested.reduced, [2])
    np.testing.assert_allclose(full, only)
    none, _ = load_marginal_costs(congested.dual, congested.reduced, [])
    np.testing.assert_allclose(none, base)


def test_fd_matches_closed_form(congested):
    red = congested.reduced
    rep = marginal_report(congested)
    for i in range(4):
        res = fd_gradient_oracle(red, ("load", i))
        assert not res.kink and res.one_sided is None
        assert res.value == pytest.approx(rep.C_load[i], abs=max(1e-3, 1e-2 * abs(rep.C_load[i])))
    res = fd_gradient_oracle(red, ("flow", 2))
    assert res.value == pytest.approx(-20.0, rel=1e-2)


def test_fd_unbounded_branch_is_zero(congested):
    assert fd_gradient_oracle(congested.reduced, ("flow", 3)).value == 0.0


def test_fd_flags_kink(case4_reduced):
    res = fd_gradient_oracle(limited(case4_reduced, F_FREE), ("flow", 2))
    assert res.kink
    assert res.forward == pytest.approx(0.0, abs=1e-4)
    assert res.backward < -1.0


def test_fd_one_sided_at_feasibility_edge(case4_reduced):
    res = fd_gradient_oracle(limited(case4_reduced, F_MIN + 5e-5), ("flow", 2))
    assert res.one_sided == "forward"
    assert res.backward is None


def test_fd_bad_coordinate(case4_reduced):
    with pytest.raises(ValueError, match="coordinate"):
        fd_gradient_oracle(case4_reduced, ("voltage", 1))


def test_monotone_in_limit(case4_reduced):
    fs = np.linspace(0.3, 0.18, 13)
    J = [solve_opf(limited(case4_reduced, f)).J for f in fs]
    assert all(b >= a - 1e-8 for a, b in zip(J, J[1:]))


def test_theorem1_pair(congested, case4_reduced):
    free = solve_opf(case4_reduced)
    chk = theorem1_check(marginal_report(congested, free), marginal_report(free, free))
    assert chk.holds
    assert chk.rhs == pytest.approx(20 * math.sqrt(2), abs=1e-5)
    np.testing.assert_allclose(chk.lhs_real, [5.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(chk.lhs_reactive, [10.0, 0.0], atol=1e-6)


def test_theorem1_rejects_congested_reference(congested):
    rep = marginal_report(congested)
    with pytest.raises(ValueError, match="binding"):
        theorem1_check(rep, rep)


def test_binding_at_the_boundary(case4_reduced):
    # the multiplier is not unique where the limit just touches; either answer is a valid dual
    sol = solve_opf(limited(case4_reduced, F_FREE))
    I, _ = binding_set(sol, warn=False)
    assert I == frozenset({2})


def test_active_without_multiplier(case4_reduced):
    sol = solve_opf(limited(case4_reduced, F_FREE))
    z = np.zeros(3)
    sol = dataclasses.replace(sol, dual=dataclasses.replace(sol.dual, mu=z, theta=z, phi=z))
    with pytest.warns(DegeneracyWarning):
        I, notes = binding_set(sol)
    assert I == frozenset({2})
    assert notes == {2: "active-without-multiplier"}
    assert marginal_report(sol).degenerate


def test_multiplier_without_activity(congested, case4_reduced):
    sol = dataclasses.replace(congested, reduced=limited(case4_reduced, 0.3))
    with pytest.warns(DegeneracyWarning):
        I, notes = binding_set(sol)
    assert I == frozenset({2})
    assert notes == {2: "multiplier-without-activity"}


def test_binding_set_of_failed_solve(case4_reduced):
    sol = solve_opf(limited(case4_reduced, 0.1))
    assert not sol.optimal
    with pytest.raises(ValueError, match="primal-infeasible"):
        binding_set(sol)


def test_marginals_csv(tmp_path, congested):
    path = tmp_path / "m.csv"
    write_marginals_csv(path, marginal_report(congested))
    lines = path.read_text().splitlines()
    assert lines[0] == "# ldf-opf v1"
    assert lines[1] == "kind,id,axis,C_load,baseline,abs_delta,bound"
    assert lines[2].startswith("load,2,real,5,")
    assert lines[4].startswith("load,2,reactive,-10,")
    row = lines[8].split(",")
    assert row[:2] == ["branch", "2"] and row[4:] == ["1", "-20"]
    assert float(row[2]) == pytest.approx(0.2, abs=1e-8)
    assert "-0," not in path.read_text()
