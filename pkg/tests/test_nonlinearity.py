import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from radshoot.nonlinearity import (HYPOTHESES, FamilyError, adaptive_simpson, check_hypotheses,
                                   find_b, find_beta, make_custom, make_family, parse_family)

FAMILIES = ["troy", "power_diff:p=3,q=1", "power_diff:p=0.8,q=0.5", "pure_power:q=0.5",
            "pure_power:q=1"]

reals = st.floats(min_value=-20, max_value=20, allow_nan=False)


@pytest.mark.parametrize("spec", FAMILIES)
@settings(max_examples=60, deadline=None)
@given(s=reals)
def test_odd_and_even_primitive(spec, s):
    nl = parse_family(spec)
    assert nl.f(-s) == -nl.f(s)
    assert nl.F(-s) == nl.F(s)


@pytest.mark.parametrize("spec", FAMILIES)
def test_primitive_matches_quadrature(spec):
    nl = parse_family(spec)
    for s in (0.3, 0.5, 0.9, 1.7, 4.0):
        ref, _ = quad(nl.f, 0.0, s, points=[0.5, 1.0], epsabs=1e-13, epsrel=1e-13)
        assert nl.F(s) == pytest.approx(ref, abs=1e-11)


@pytest.mark.parametrize("spec", ["troy", "power_diff:p=3,q=1", "pure_power:q=1"])
def test_fprime_matches_difference(spec):
    nl = parse_family(spec)
    for s in (0.2, 0.7, 1.3, 3.0):
        h = 1e-6
        assert nl.fprime(s) == pytest.approx((nl.f(s + h) - nl.f(s - h)) / (2 * h), rel=1e-6)


def test_landmarks_closed_form():
    troy = make_family("troy")
    assert troy.f(troy.b) == 0.0
    assert troy.F(troy.beta) == pytest.approx(0.0, abs=1e-15)
    for p, q in [(3, 1), (2, 1), (0.8, 0.5)]:
        nl = make_family("power_diff", {"p": p, "q": q})
        assert nl.beta == pytest.approx(((p + 1) / (q + 1)) ** (1 / (p - q)), rel=1e-14)
        assert find_beta(nl) == pytest.approx(nl.beta, rel=1e-12)
    assert make_family("pure_power", {"q": 0.5}).beta == 0.0


def test_parse_and_spec_round_trip():
    nl = parse_family("power_diff:p=3,q=1")
    assert nl.param == {"p": 3.0, "q": 1.0}
    assert parse_family(nl.spec).param == nl.param
    assert parse_family(" troy ").tag == "troy"


@pytest.mark.parametrize("bad", ["nope", "troy:p=1", "power_diff:p=1", "power_diff:p=1,q=2",
                                 "pure_power:q=1.5", "pure_power:q", "pure_power:q=x",
                                 "custom"])
def test_parse_errors(bad):
    with pytest.raises(FamilyError):
        parse_family(bad)


def test_F_over_f_removable_points():
    nl = make_family("pure_power", {"q": 0.5})
    assert nl.F_over_f(0.0) == 0.0
    # F/f = s/(q+1) for a pure power, so (F/f)' = 1/(q+1)
    assert nl.F_over_f_prime(0.0) == pytest.approx(1 / 1.5, rel=1e-9)
    assert nl.F_over_f(2.0) == pytest.approx(2.0 / 1.5)


def test_troy_F_over_f_prime_formula():
    nl = make_family("troy")
    for s in (1.2, 2.0, 5.0, 9.5):
        assert nl.F_over_f_prime(s) == pytest.approx(0.5 + 0.25 / (s - 1) ** 2, rel=1e-12)


def test_adaptive_simpson():
    assert adaptive_simpson(math.sin, 0.0, math.pi, tol=1e-12) == pytest.approx(2.0, abs=1e-11)
    assert adaptive_simpson(math.sqrt, 0.0, 1.0, tol=1e-12) == pytest.approx(2 / 3, abs=1e-9)


def test_custom_family_matches_builtin():
    ref = make_family("power_diff", {"p": 3, "q": 1})
    nl = make_custom(ref.f, ref.fprime)
    assert nl.b == pytest.approx(1.0, rel=1e-10)
    assert nl.beta == pytest.approx(math.sqrt(2), rel=1e-10)
    assert nl.F(1.3) == pytest.approx(ref.F(1.3), abs=1e-11)
    assert find_b(ref.f) == pytest.approx(1.0, rel=1e-10)


def test_hypotheses_report_shape():
    rep = check_hypotheses(make_family("troy"), 3)
    assert set(rep.verdicts) == set(HYPOTHESES)
    assert rep.holds("f1", "f2", "f3", "f4", "f4p", "f5", "f6")
    assert len(rep.lines()) == len(HYPOTHESES) + 1


def test_hypotheses_regimes():
    troy4 = check_hypotheses(make_family("troy"), 4)
    assert troy4["f4p"].status == "fail"
    pp = check_hypotheses(make_family("pure_power", {"q": 0.5}), 3)
    assert pp.holds("f1p", "f2p", "f3p", "f3p_strict")
    pd = check_hypotheses(make_family("power_diff", {"p": 3, "q": 1}), 2)
    assert pd.holds("f4", "f4p")
