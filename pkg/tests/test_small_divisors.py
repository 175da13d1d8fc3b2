from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_bnf import indices as ix
from gevrey_bnf import small_divisors as sd
from gevrey_bnf.errors import KernelInputError, ParseError, ResonanceError, ValidationError
from gevrey_bnf.formal_hamiltonian import Frequency, build, momentum_keys, random_hamiltonian

S = ix.signed_index


def test_c_star_and_params():
    assert sd.c_star(0.5) == pytest.approx(7 / (2 - math.sqrt(2)))
    p = sd.DivisorParams(1e-3, 0.5, 0.5)
    assert p.c_star == sd.c_star(0.5)
    assert p.loss_constant == pytest.approx(0.5 * 0.5 * (2 - math.sqrt(2)) / 84)
    with pytest.raises(ValidationError):
        sd.DivisorParams(sigma=1.5)
    with pytest.raises(ValidationError):
        sd.DivisorParams(gamma=0)
    with pytest.raises(ValidationError):
        sd.c_star(1.0)
    # grows without bound as theta -> 1
    assert sd.c_star(0.999) > 1000


def test_divisor_weight():
    assert sd.divisor_weight(S({1: 1}), 1e-3) == pytest.approx(1e-3 / 2)
    assert sd.divisor_weight(S({2: 1, -2: -1}), 1.0) == pytest.approx(1 / 25)
    assert sd.divisor_weight(S({3: 2}), 1.0) < sd.divisor_weight(S({3: 1}), 1.0)
    with pytest.raises(ValidationError):
        sd.divisor_weight(S({}), 1.0)


def test_sample_frequency():
    a, b = sd.sample_frequency(4), sd.sample_frequency(4)
    assert [a.omega(j) for j in range(-5, 6)] == [b.omega(j) for j in range(-5, 6)]
    assert all(abs(a.omega(j) - j * j) <= 0.5 for j in range(-50, 51))
    c = sd.sample_frequency(5)
    assert any(a.omega(j) != c.omega(j) for j in range(-3, 4))


def test_vectors_enumeration():
    vs = sd._vectors(3, 2)
    # 3 of norm 1, and for norm 2: 3 of the form 2e_i, 3*2 of the form e_i +- e_k
    assert len(vs) == 3 + 3 + 6
    assert len(set(vs)) == len(vs)
    assert all(tuple(-x for x in v) not in vs for v in vs)


def test_unperturbed_frequency_is_resonant():
    ok, (ell, ratio) = sd.is_diophantine_up_to(Frequency(), 1e-3, 2, 2)
    assert not ok and ratio == 0.0
    w = Frequency()
    assert w.dot(ell) == 0


def test_diophantine_witness_is_consistent():
    freq = sd.sample_frequency(11)
    ok, (ell, ratio) = sd.is_diophantine_up_to(freq, 1e-3, 3, 4)
    assert ratio == pytest.approx(abs(freq.dot(ell)) / sd.divisor_weight(S(dict(ell)), 1e-3), rel=1e-9)
    assert ok == (ratio > 1)
    # brute force over the same box
    best = math.inf
    for v in sd._vectors(9, 3):
        e = S({j - 4: x for j, x in enumerate(v) if x})
        best = min(best, abs(freq.dot(e)) / sd.divisor_weight(e, 1e-3))
    assert best == pytest.approx(ratio, rel=1e-9)


def test_far_divisor_regime():
    # |sum l_i i^2| >= 2 sum |l_i| forces |omega . l| >= 1 for every admissible omega
    freqs = [sd.sample_frequency(k) for k in range(20)]
    extremes = [Frequency(overrides={j: Fraction(s * (1 if j % 2 else -1), 2) for j in range(-4, 5)}) for s in (1, -1)]
    for a, b in momentum_keys((-4, 4), 1, 3):
        if a == b or sd.divisor_condition(a, b):
            continue
        assert sd.far_divisor_lower_bound(a, b) >= 1
        u = ix.difference(a, b)
        for f in freqs + extremes:
            assert abs(f.dot(u)) >= 1


def test_measure_estimate():
    hi = sd.measure_estimate(1e-1, (2, 3), 60, seed=1)
    lo = sd.measure_estimate(1e-3, (2, 3), 60, seed=1)
    assert lo.failures <= hi.failures
    assert 0 <= hi.low <= hi.fraction <= hi.high <= 1
    assert hi.as_dict()["n_samples"] == 60
    with pytest.raises(ValidationError):
        sd.measure_estimate(1e-1, (2, 3), 0)


def test_lemma_suite_small_window():
    rep = sd.verify_rearrangement_lemmas((-3, 3), 5, 0.5)
    assert rep.passed, rep.format()
    assert set(rep.checks) == {
        "gevrey-split", "smoothing-gap", "site-sum", "far-divisor",
        "count", "domination", "leading-site", "divisor-loss",
    }
    assert all(c.checked > 0 for c in rep.checks.values())
    assert rep.c_star == sd.c_star(0.5)
    assert "keys=" in rep.format()


def test_quadratic_keys_are_equalities():
    # |alpha| + |beta| = 2 with zero momentum: n_1 = n_2 and the split is sharp
    rep = sd.verify_rearrangement_lemmas((-4, 4), 2, 0.5)
    c = rep.checks["gevrey-split"]
    assert c.equalities == c.checked == rep.n_keys


def test_check_stats_detects_violation():
    c = sd.CheckStats()
    c.add("k", 2.0, 1.0)
    c.add("k", 1.0, 1.0)
    assert len(c.violations) == 1 and c.equalities == 1 and c.min_slack == -1.0


def test_i_sharp_formula():
    c = sd.c_star(0.5)
    x = 24 * c / 0.5
    expect = (x * math.log(12 * c / 0.5)) ** 4
    assert sd.i_sharp(1.0, 0.5) == pytest.approx(expect)
    i, B = sd.exponent_bound(1.0, 0.5)
    assert B == pytest.approx(18 * i * math.log(i))
    with pytest.raises(ValidationError):
        sd.exponent_bound(0.0, 0.5)
    with pytest.raises(ValidationError):
        sd.exponent_bound(1.5, 0.5)


def test_exponent_bound_decreasing_in_sigma():
    bs = [sd.exponent_bound(s, 0.5)[1] for s in (0.05, 0.1, 0.5, 1.0)]
    assert all(a > b for a, b in zip(bs, bs[1:]))


def test_f_term_zero():
    for i in (-7, 0, 3, 100):
        assert sd.f_term(i, 0, 0.5, 0.5) == 0


def test_f_nonpositive_beyond_i_sharp():
    # the sum is effectively over sites below i_sharp: beyond it no integer x helps
    for sigma, theta in [(1.0, 0.5), (0.5, 0.5), (1.0, 0.75)]:
        i0 = sd.i_sharp(sigma, theta)
        for n in np.geomspace(i0, 1e6 * i0, 13):
            for x in (1, 2, 3, 10, 100):
                assert sd.f_term(int(math.ceil(n)), x, sigma, theta) <= 0


def test_exponent_sum_dominated_by_site_maxima():
    # sup over l of the sum is at most (2 i_sharp + 1) max_n max_x f_n(x)
    sigma, theta = 1.0, 0.5
    i0, B = sd.exponent_bound(sigma, theta)
    best = 0.0
    for n in np.unique(np.geomspace(1, i0, 400).astype(np.int64)):
        # f_n'(x) = 0 at x = (1 + sqrt(1 - a^2/n^2)) / a, a = (sigma / C_*) n^(theta/2)
        a = sigma / sd.c_star(theta) * float(n) ** (theta / 2)
        if a < n:
            x = (1 + math.sqrt(1 - (a / n) ** 2)) / a
            best = max(best, sd.f_term(int(n), x, sigma, theta))
    assert best > 0
    assert (2 * i0 + 1) * best <= B


@settings(max_examples=200)
@given(st.dictionaries(st.integers(-50, 50), st.integers(-20, 20), max_size=6), st.sampled_from([0.1, 0.5, 1.0]))
def test_exponent_sum_random_ell(d, sigma):
    ell = S(d)
    assert sd.exponent_sum(ell, sigma, 0.5) <= sd.exponent_bound(sigma, 0.5)[1]


def test_c1_surrogate():
    c = sd.c1_surrogate(0.5)
    i0, B = sd.exponent_bound(1.0, 0.5)
    assert c == pytest.approx(B, rel=1e-9)
    assert sd.c1_surrogate(0.5, sigma_max=0.5) < c


@pytest.mark.parametrize("sigma", [0.1, 0.5, 1.0])
def test_homological_bound(sigma):
    freq = sd.sample_frequency(3)
    R = random_hamiltonian(8, (-4, 4), 1, 4, n_terms=40, kernel=False)
    rep = sd.verify_homological_bound(freq, R, 1e-3, sigma)
    assert rep.passed and rep.margin >= 0
    assert len(rep.keys) == len(R)
    assert not rep.chain_breaks
    assert {k.branch for k in rep.keys} <= {"far", "near", "D=0"}


def test_homological_branches_and_errors():
    freq = sd.sample_frequency(3)
    far = build([({3: 1, -3: 1}, {0: 2}, 1)], 4)
    rep = sd.verify_homological_bound(freq, far, 1e-3, 0.5)
    assert rep.keys[0].branch == "far" and rep.keys[0].log_K <= math.log(1e-3)
    # alpha - beta = 2 e_0: the divisor is 2 xi_0
    d0 = build([({0: 3, 1: 1}, {0: 1, 1: 1}, 1)], 4)
    rep = sd.verify_homological_bound(freq, d0, 1e-3, 0.5)
    assert rep.keys[0].branch == "D=0" and rep.passed
    near = build([({1: 1, -1: 1}, {0: 2}, 1)], 4)
    rep = sd.verify_homological_bound(freq, near, 1e-3, 0.5)
    assert rep.keys[0].branch == "near" and rep.passed
    with pytest.raises(KernelInputError):
        sd.verify_homological_bound(freq, build([({1: 2}, {1: 2}, 1)], 4), 1e-3, 0.5)
    flat = Frequency(overrides={0: Fraction(1, 2), 1: Fraction(-1, 2), -1: Fraction(-1, 2)})
    with pytest.raises(ResonanceError):
        sd.homological_log_K(flat, (ix.multi_index({-1: 1, 1: 1}), ix.multi_index({0: 2})), 1e-3, 0.5, 0.5)


def test_frequency_file_round_trip(tmp_path):
    f = Frequency(gamma=2.5e-3, seed=9, overrides={0: Fraction(1, 3), 4: -0.125})
    p = tmp_path / "freq.txt"
    sd.write_frequency(f, p, sites=range(-2, 3))
    g = sd.read_frequency(p)
    assert g.gamma == f.gamma
    assert all(g.omega(j) == f.omega(j) for j in range(-6, 7))
    assert isinstance(g.xi(0), Fraction)


def test_frequency_parse_errors():
    with pytest.raises(ParseError, match="line 2"):
        sd.loads_frequency("gamma 1e-3\n1 0.7\n")
    with pytest.raises(ParseError, match="line 3"):
        sd.loads_frequency("gamma 1e-3\n1 0.1\n1 0.2\n")
    with pytest.raises(ParseError):
        sd.loads_frequency("seed 3\n")
    with pytest.raises(ParseError, match="line 1"):
        sd.loads_frequency("gamma x\n")
    with pytest.raises(ParseError, match="line 2"):
        sd.loads_frequency("gamma 1\n3 1/4 extra\n")
