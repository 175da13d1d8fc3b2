from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import pytest

from gevrey_bnf import convergence_scheme as cs
from gevrey_bnf.errors import DecayViolation, ValidationError
from gevrey_bnf.formal_hamiltonian import Frequency, build, d_omega
from gevrey_bnf.gevrey_norms import GevreyParams, norm_upper
from gevrey_bnf.lie_algebra import lie_transform
from gevrey_bnf.normal_form import perturbation

FREQ = Frequency(seed=7, denominator=2**20)


def constructed(cap=16):
    S = build([({1: 1, -1: 1}, {0: 2}, (Fraction(1), Fraction(2)))], cap)
    return lie_transform(S, d_omega(FREQ, (-2, 2), cap), cap)


def test_schedule_sums():
    sch = cs.Schedule(1.0, 1.0, i_max=4)
    n = 200_000
    assert sum(sch.rho(i) for i in range(n)) == pytest.approx(0.5, rel=1e-5)
    assert sum(sch.sigma(i) for i in range(n)) == pytest.approx(1.0, rel=1e-5)
    assert cs.C_TILDE == pytest.approx(1 + math.pi**2 / 6)
    rs = [sch.r(i) for i in range(30)]
    ss = [sch.s(i) for i in range(30)]
    assert all(a > b for a, b in zip(rs, rs[1:])) and rs[-1] > 0.5
    assert all(a < b for a, b in zip(ss, ss[1:])) and ss[-1] < 2.0
    assert [sch.d(i) for i in range(5)] == [1, 2, 4, 8, 16]
    # <0> = 1: the first two steps have the same size
    assert sch.rho(0) == sch.rho(1)


def test_schedule_validation():
    with pytest.raises(ValidationError):
        cs.Schedule(0.0, 1.0)
    with pytest.raises(ValidationError):
        cs.Schedule(1.0, 1.0, chi=2.0)
    with pytest.raises(ValidationError):
        cs.Schedule(1.0, 1.0, i_max=-1)


def test_schedule_mp_radius():
    r0 = mpmath.mpf(10) ** -1000
    sch = cs.Schedule(r0, 1.0)
    assert sch.r(3) < r0 and float(mpmath.log10(sch.r(3))) == pytest.approx(-1000, abs=0.5)


def test_chi_margin_reference_value():
    d = cs.chi_margin_details(15 / 14)
    assert d.value <= -0.2
    assert d.value == pytest.approx(-0.2518, abs=5e-4)
    assert d.argmax == 3
    assert d.tail_bound < 0


def test_chi_margin_by_hand():
    # first terms directly from the formula
    C = cs.C_TILDE
    chi = 15 / 14
    terms = [2 ** (n + 1) * math.log(1 - 1 / (2 * C * max(n, 1) ** 2)) + chi**n * (chi - 1) for n in range(40)]
    assert cs.chi_margin(chi) == pytest.approx(max(terms), rel=1e-12)


def test_chi_margin_near_two_fails_and_monotone():
    assert cs.chi_margin(1.99) > 0
    vals = [cs.chi_margin(c) for c in (1.01, 15 / 14, 1.2, 1.5)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValidationError):
        cs.chi_margin(1.0)


def test_smallness_threshold():
    sm = cs.smallness_threshold(1.0, 0.5)
    assert math.isfinite(sm.log_eps0) and sm.log_eps0 < 0
    assert sm.log_eps0 == pytest.approx(-1.445e58, rel=5e-3)
    assert sm.eps0 > 0
    bigger = cs.smallness_threshold(2.0, 0.5)
    assert bigger.log_eps0 > sm.log_eps0
    doubled = cs.smallness_threshold(1.0, 0.5, K_cal=2.0)
    assert doubled.log_eps0 == -math.log(2.0) - doubled.log_sup
    assert doubled.log_sup == sm.log_sup
    with pytest.raises(ValidationError):
        cs.smallness_threshold(0.0, 0.5)


def test_smallness_small_constant_by_scan():
    # with a modest C_1 the sup can be checked by a plain scan
    sm = cs.smallness_threshold(1.0, 0.5, c1=1e-3)
    a, chi = 12.0, 15 / 14
    c2 = 1e-3 * cs.C_TILDE**6
    best = -math.inf
    for n in range(0, 4000):
        cn = chi**n
        body = max(n - cn, -(2 - chi) * cn)
        best = max(best, c2 * max(n, 1) ** a + 2 * math.log(max(n, 1)) + body)
    assert sm.log_sup == pytest.approx(best, rel=1e-9)


def test_radius_for_smallness():
    P0 = perturbation(constructed(), FREQ)
    sm = cs.smallness_threshold(1.0, 0.5)
    r0 = cs.radius_for_smallness(P0, FREQ.gamma, sm.log_eps0, 1.0)
    eps0 = norm_upper(P0, GevreyParams(r0, 1.0)) / FREQ.gamma
    assert float(mpmath.log(eps0)) <= sm.log_eps0
    assert r0 <= 1
    assert cs.radius_for_smallness(build([], 4), 1e-3, -10.0, 1.0) == 1


def test_trivial_run():
    rep = cs.run_scheme(d_omega(FREQ, (-2, 2), 8), FREQ, cs.Schedule(0.1, 1.0), smallness=cs.smallness_threshold(1.0, 0.5))
    assert rep.compliant and all(s.eps == 0 for s in rep.steps)


@pytest.fixture(scope="module")
def compliant_report():
    H0 = constructed()
    sm = cs.smallness_threshold(1.0, 0.5)
    r0 = cs.radius_for_smallness(perturbation(H0, FREQ), FREQ.gamma, sm.log_eps0, 1.0)
    return cs.run_scheme(H0, FREQ, cs.Schedule(r0, 1.0), cap=16, smallness=sm)


def test_compliant_run(compliant_report):
    rep = compliant_report
    assert rep.compliant and not rep.warnings
    # P_3 already vanishes at cap 16, which ends the iteration
    assert [s.i for s in rep.steps] == [0, 1, 2, 3]
    assert [s.min_degree for s in rep.steps] == [2, 6, 14, math.inf]
    for s in rep.steps[1:]:
        assert s.eps <= rep.eps0 * mpmath.exp(-mpmath.mpf(15 / 14) ** s.i)
        assert s.min_degree >= 2**s.i
    for s in rep.steps:
        assert s.generator_ok and s.kernel_ok and s.displacement_ok
        assert s.chain_breaks == 0
    assert rep.decay_ok
    text = rep.format()
    assert "compliant=True" in text
    rows = rep.records()
    assert rows[1]["decay_ok"] is True and rows[1]["log10_eps"] < rows[0]["log10_eps"]


def test_noncompliant_run_warns():
    H0 = constructed(8)
    with pytest.warns(UserWarning, match="smallness"):
        rep = cs.run_scheme(H0, FREQ, cs.Schedule(0.05, 1.0, i_max=3), smallness=cs.smallness_threshold(1.0, 0.5))
    assert not rep.compliant and rep.warnings


def test_decay_violation_raised_on_broken_step():
    step = cs.SchemeStep(2, 0.5, 1.2, 4, 10, eps=mpmath.mpf(3), bound=mpmath.mpf(1), smallest_divisor=1.0,
                         kernel_term=mpmath.mpf(2), tail_term=mpmath.mpf(1))
    with pytest.raises(DecayViolation) as ei:
        cs._raise_if_broken(step)
    assert ei.value.step == 2 and ei.value.term == "kernel"
    ok = cs.SchemeStep(2, 0.5, 1.2, 4, 10, eps=mpmath.mpf(0.5), bound=mpmath.mpf(1), smallest_divisor=1.0)
    cs._raise_if_broken(ok)
    ok.generator_ok = False
    with pytest.raises(DecayViolation, match="generator"):
        cs._raise_if_broken(ok)
