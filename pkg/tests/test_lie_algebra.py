from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gevrey_bnf import lie_algebra as la
from gevrey_bnf.errors import OrderViolation
from gevrey_bnf.formal_hamiltonian import Frequency, build, d_omega, random_hamiltonian
from gevrey_bnf.scalars import F64, RATIONAL

from oracles import full_dict, symbolic_bracket

seeds = st.integers(0, 100_000)


def rand(seed, lo=1, cap=4, terms=5, window=(-3, 3), max_degree=None, field=RATIONAL):
    return random_hamiltonian(seed, window, lo, cap, n_terms=terms, max_degree=max_degree, field=field)


def test_word_coefficients():
    c = la._word_coefficient
    assert c("G") == c("F") == 1
    assert c("GF") == Fraction(1, 4) and c("FG") == Fraction(-1, 4)
    assert c("GGF") == c("FFG") == Fraction(1, 36)
    assert c("GG") == c("FF") == 0


def test_bracket_with_d_omega():
    freq = Frequency(overrides={0: Fraction(1, 3), 1: Fraction(-1, 5), -1: Fraction(1, 7)})
    D = d_omega(freq, (-1, 1), 4)
    a, b = {1: 1, -1: 1}, {0: 2}
    G = build([(a, b, (2, 3))], 4)
    out = la.poisson(D, G, 4)
    w = freq.omega(0) * 2 - freq.omega(1) - freq.omega(-1)
    expect = RATIONAL.convert((2, 3)) * RATIONAL.convert((0, w))
    assert len(out) == 1
    assert out.coefficient(a, b) == expect


def test_bracket_antisymmetric_self():
    F = rand(3)
    assert la.poisson(F, F).is_zero()


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_bracket_matches_symbolic_oracle(seed):
    F, G = rand(seed), rand(seed + 1)
    F, G = F.with_cap(8), G.with_cap(8)
    assert full_dict(la.poisson(F, G)) == symbolic_bracket(F, G)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_bracket_laws(seed):
    F, G, H = rand(seed, cap=3, terms=4), rand(seed + 1, cap=3, terms=4), rand(seed + 2, cap=3, terms=4)
    cap = 9
    P = la.poisson
    assert P(F, G, cap) == -P(G, F, cap)
    jac = P(F, P(G, H, cap), cap) + P(G, P(H, F, cap), cap) + P(H, P(F, G, cap), cap)
    assert jac.is_zero()
    # bilinearity
    assert P(F + G, H, cap) == P(F, H, cap) + P(G, H, cap)
    assert P(F.scale(Fraction(3, 2)), G, cap) == P(F, G, cap).scale(Fraction(3, 2))
    out = P(F, G, cap)
    if not out.is_zero():
        assert out.min_degree >= F.min_degree + G.min_degree


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_bracket_closure(seed):
    F, G = rand(seed), rand(seed + 1)
    out = la.poisson(F, G, 8)
    full = out.full_terms()
    for (a, b), c in full.items():
        assert sum(j * e for j, e in a) == sum(j * e for j, e in b)
        assert full[(b, a)] == RATIONAL.conj(c)


def test_cap_truncates():
    F, G = rand(1, 2, 4), rand(2, 2, 4)
    out = la.poisson(F, G, 5)
    assert out.degree_cap == 5
    assert out.is_zero() or out.max_degree <= 5
    assert la.poisson(F, G, 3).is_zero()


def test_float_matches_exact():
    F, G = rand(11), rand(12)
    ex = la.poisson(F, G, 8).to_field(F64)
    fl = la.poisson(F.to_field(F64), G.to_field(F64), 8)
    assert ex.max_abs_difference(fl) < 1e-12


def test_ad_power():
    S, H = rand(5, lo=2, cap=8, max_degree=3), rand(6, lo=1, cap=8, max_degree=3)
    assert la.ad_power(S, H, 0) == H
    k2 = la.ad_power(S, H, 2, 8)
    assert k2 == la.poisson(S, la.poisson(S, H, 8), 8)
    if not k2.is_zero():
        assert k2.min_degree >= H.min_degree + 2 * S.min_degree
    assert la.ad_power(S, H, 4, 8).is_zero()
    with pytest.raises(ValueError):
        la.ad_power(S, H, -1)


def test_lie_transform_identity_and_inverse():
    S, H = rand(7, cap=6, max_degree=3), rand(8, cap=6, max_degree=3)
    zero = build([], 6)
    assert la.lie_transform(zero, H) == H
    back = la.lie_transform(-S, la.lie_transform(S, H, 6), 6)
    assert back == H


def test_lie_transform_expansion_order():
    freq = Frequency(seed=2, denominator=1024)
    D = d_omega(freq, (-3, 3), 6)
    S = rand(9, lo=1, cap=6, max_degree=2)
    rest = la.lie_transform(S, D, 6) - D - la.poisson(S, D, 6)
    assert rest.is_zero() or rest.min_degree >= 2 * S.min_degree


def test_lie_transform_rejects_low_order():
    S = build([({1: 1}, {1: 1}, 1)], 4)
    with pytest.raises(OrderViolation):
        la.lie_transform(S, rand(1))


def test_bch_trivial_cases():
    F = rand(1, cap=6, max_degree=2)
    zero = build([], 6)
    assert la.bch(F, zero) == F
    assert la.bch(zero, F) == F
    K1 = build([({1: 1, 2: 1}, {1: 1, 2: 1}, 1)], 6)
    K2 = build([({1: 2}, {1: 2}, Fraction(1, 3)), ({-1: 1, 0: 1}, {-1: 1, 0: 1}, 2)], 6)
    assert la.bch(K1, K2) == K1 + K2
    with pytest.raises(OrderViolation):
        la.bch(build([({1: 1}, {1: 1}, 1)], 6), F)


@settings(max_examples=6, deadline=None)
@given(seeds)
def test_bch_defining_property(seed):
    cap = 6
    G = rand(seed, cap=cap, terms=2, window=(-2, 2), max_degree=2)
    F = rand(seed + 1, cap=cap, terms=2, window=(-2, 2), max_degree=2)
    H = rand(seed + 2, cap=cap, terms=2, window=(-2, 2), max_degree=2)
    K = la.bch(G, F, cap)
    assert la.lie_transform(K, H, cap) == la.lie_transform(G, la.lie_transform(F, H, cap), cap)
    rest = K - F - G
    assert rest.is_zero() or rest.min_degree >= F.min_degree + G.min_degree


def test_compose_generators():
    cap = 6
    S0 = rand(1, lo=1, cap=cap, terms=2, window=(-2, 2), max_degree=1)
    S1 = rand(2, lo=2, cap=cap, terms=2, window=(-2, 2), max_degree=2)
    S2 = rand(3, lo=4, cap=cap, terms=2, window=(-2, 2), max_degree=4)
    assert la.compose_generators([S0], cap) == S0
    assert la.compose_generators([S0, S1], cap) == la.bch(S1, S0, cap)
    H = rand(4, cap=cap, terms=2, window=(-2, 2), max_degree=2)
    C = la.compose_generators([S0, S1, S2], cap)
    seq = la.lie_transform(S2, la.lie_transform(S1, la.lie_transform(S0, H, cap), cap), cap)
    assert la.lie_transform(C, H, cap) == seq
    # appending a generator above degree 3 leaves the part up to degree 3 alone
    C2 = la.compose_generators([S0, S1], cap)
    assert C.filter_degree(hi=3) == C2.filter_degree(hi=3)
    with pytest.raises(OrderViolation):
        la.compose_generators([S1, S0], cap)
