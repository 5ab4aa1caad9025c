import math

import numpy as np
import pytest

from radshoot.io import read_table
from radshoot.radial_ode import ProblemConfig
from radshoot.shooting import (ShootingError, classify, dirichlet_zero, find_bound_state,
                               locate_bracket, reaches, scan, scan_to_csv, solve_dirichlet,
                               switch_points)

# troy, n = 3: scipy DOP853 shooting at rtol 1e-13 (independent integrator)
TROY_N3 = {1: 4.41033597779, 2: 9.2043001763, 3: 13.9325436211}
# pure_power(0.5), n = 3: first zeros of the alpha = 1 shot, same oracle
SQRT_Z = (2.75269805, 4.8144635, 6.64593234)


def test_classify_outcomes(troy):
    low = classify(troy, 3, 1.5)  # F(alpha) < 0: never leaves the well
    assert low.outcome == "lands-P" and low.level == 1 and low.label == "P_1"
    c = classify(troy, 3, 5.0, k_max=1)
    assert c.outcome == "reaches-N" and c.label == "N_1" and len(c.zeros) == 1
    c2 = classify(troy, 3, 5.0, k_max=2)
    assert c2.label == "P_2" and c2.extrema_u[-1] < -troy.beta + 1.0
    assert reaches(c2, 1) is True and reaches(c2, 2) is False


def test_classify_rejects_small_alpha(troy):
    with pytest.raises(ValueError):
        classify(troy, 3, 0.9)


def test_classify_keeps_trajectory(troy):
    c = classify(troy, 3, 5.0, keep_trajectory=True)
    assert c.trajectory is not None and c.trajectory.termination == "classifier-stop"


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bound_states_against_oracle(troy, k):
    bs = find_bound_state(troy, 3, k, (troy.beta * (1 + 1e-9), 30.0))
    assert bs.width <= 1e-10 * bs.alpha_star
    assert bs.alpha_star == pytest.approx(TROY_N3[k], rel=1e-8)
    assert bs.lo.label == f"P_{k}" and bs.hi.label == f"N_{k}"
    assert len(bs.hi.zeros) == k
    rep = bs.report()
    assert rep["k"] == k and rep["alpha_lo"] < rep["alpha_star"] < rep["alpha_hi"]


def test_bound_state_bad_bracket(troy):
    with pytest.raises(ShootingError):
        find_bound_state(troy, 3, 1, (5.0, 6.0))


def test_locate_bracket(troy):
    lo, hi = locate_bracket(troy, 3, 2)
    assert lo < TROY_N3[2] < hi


def test_scan_switches_and_csv(tmp_path, troy):
    grid = np.linspace(2.0, 15.0, 131)
    res = scan(troy, 3, grid, k_max=3)
    assert [c.alpha for c in res] == list(grid)
    for k in (1, 2, 3):
        sw = switch_points(res, k)
        assert len(sw) == 1
        assert res[sw[0] - 1].alpha < TROY_N3[k] <= res[sw[0]].alpha
    scan_to_csv(res, tmp_path / "s.csv", 3, {"family": "troy"})
    cols, rows = read_table(tmp_path / "s.csv")
    assert cols[:3] == ["alpha", "outcome", "level"] and len(rows) == 131


def test_scan_parallel_matches_serial(troy):
    grid = np.linspace(3.0, 10.0, 12)
    a = scan(troy, 3, grid, k_max=2, jobs=1)
    b = scan(troy, 3, grid, k_max=2, jobs=3)
    assert [c.label for c in a] == [c.label for c in b]
    assert [c.zeros for c in a] == [c.zeros for c in b]


def test_dirichlet_zero_scaling(sqrt_power):
    z1, _ = dirichlet_zero(sqrt_power, 3, 1.0, 1, ProblemConfig(n=3, alpha=1.0, r_max=20.0))
    assert z1 == pytest.approx(SQRT_Z[0], rel=1e-7)
    z16, _ = dirichlet_zero(sqrt_power, 3, 16.0, 1, ProblemConfig(n=3, alpha=16.0, r_max=20.0))
    assert z16 == pytest.approx(2.0 * z1, rel=1e-8)  # Z(alpha) = alpha^(1/4) Z(1)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_solve_dirichlet(sqrt_power, k):
    sol = solve_dirichlet(sqrt_power, 3, 1.0, k)
    assert sol.alpha == pytest.approx(SQRT_Z[k] ** -4, rel=1e-7)
    assert len(sol.zeros) == k + 1
    assert abs(sol.zeros[-1] - 1.0) <= 1e-10
    assert not sol.degenerate


def test_dirichlet_linear_is_degenerate(linear):
    sol = solve_dirichlet(linear, 3, math.pi, 0)
    assert sol.degenerate


# power_diff(3,1), n = 2: scipy DOP853 shooting at rtol 1e-13
PD31_N2 = {1: 2.206200864650712, 2: 3.331989266584996, 3: 4.150094036246148}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bound_states_power_diff(pd31, k):
    bs = find_bound_state(pd31, 2, k, (pd31.beta * (1 + 1e-9), 10.0))
    assert bs.alpha_star == pytest.approx(PD31_N2[k], rel=1e-8)
