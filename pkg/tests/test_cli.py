from __future__ import annotations

import json
from fractions import Fraction

import pytest

from gevrey_bnf import cli
from gevrey_bnf import small_divisors as sd
from gevrey_bnf.formal_hamiltonian import Frequency, build, d_omega, dumps, random_hamiltonian
from gevrey_bnf.lie_algebra import lie_transform

FREQ = Frequency(seed=7, denominator=2**20)
WINDOW = (-2, 2)


@pytest.fixture
def freq_file(tmp_path):
    p = tmp_path / "freq.txt"
    sd.write_frequency(FREQ, p, sites=range(-3, 4))
    return p


def write(tmp_path, name, H):
    p = tmp_path / name
    p.write_text(dumps(H))
    return p


def conjugated(cap=6):
    S = random_hamiltonian(0, WINDOW, 1, cap, n_terms=3, max_degree=2, kernel=False)
    Z0 = random_hamiltonian(1, WINDOW, 2, cap, n_terms=2, max_degree=4, kernel=True)
    return lie_transform(S, d_omega(FREQ, WINDOW, cap) + Z0, cap)


def linearizable(cap):
    S = build([({1: 1, -1: 1}, {0: 2}, (Fraction(1), Fraction(2)))], cap)
    return lie_transform(S, d_omega(FREQ, WINDOW, cap), cap)


def test_bnf_writes_outputs(tmp_path, freq_file, capsys):
    h = write(tmp_path, "h.txt", conjugated())
    out = tmp_path / "out"
    assert cli.main(["bnf", str(h), str(freq_file), "--target", "6", "--out", str(out)]) == 0
    for name in ("generator_0.txt", "normal_form.txt", "report.txt", "steps.json"):
        assert (out / name).exists(), name
    rec = json.loads((out / "steps.json").read_text())
    assert rec["remainder_min_degree"] == 7
    assert "normal form terms" in capsys.readouterr().out


def test_bnf_is_deterministic(tmp_path, freq_file):
    h = write(tmp_path, "h.txt", conjugated())
    texts = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert cli.main(["bnf", str(h), str(freq_file), "--out", str(out)]) == 0
        texts.append([(out / n).read_bytes() for n in ("normal_form.txt", "report.txt", "steps.json")])
    assert texts[0] == texts[1]


def test_bnf_malformed_line(tmp_path, freq_file, capsys):
    h = tmp_path / "bad.txt"
    h.write_text("degree_cap 4\nprecision rational\nalpha{0:1} beta{0:1} 1 0\nalpha{1:1 beta{1:1} 1 0\n")
    assert cli.main(["bnf", str(h), str(freq_file), "--out", str(tmp_path / "o")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_bnf_resonance_names_key(tmp_path, capsys):
    flat = Frequency(overrides={0: Fraction(1, 2), 1: Fraction(-1, 2), -1: Fraction(-1, 2)})
    f = tmp_path / "flat.txt"
    sd.write_frequency(flat, f, sites=range(-1, 2))
    H = d_omega(flat, (-1, 1), 4) + build([({-1: 1, 1: 1}, {0: 2}, 1)], 4)
    h = write(tmp_path, "h.txt", H)
    assert cli.main(["bnf", str(h), str(f), "--target", "4", "--out", str(tmp_path / "o")]) == 3
    assert "alpha{-1:1,1:1} beta{0:2}" in capsys.readouterr().err


def test_bnf_linearizable_modes(tmp_path, freq_file):
    h = write(tmp_path, "lin.txt", linearizable(8))
    out = tmp_path / "lin"
    assert cli.main(["bnf", str(h), str(freq_file), "--linearizable", "--i-max", "3", "--out", str(out)]) == 0
    assert (out / "generator_0.txt").exists() and (out / "steps.json").exists()
    K = d_omega(FREQ, WINDOW, 8) + build([({1: 2}, {1: 2}, 1)], 8)
    h = write(tmp_path, "nl.txt", K)
    assert cli.main(["bnf", str(h), str(freq_file), "--linearizable", "--out", str(tmp_path / "nl")]) == 4


def test_bad_arguments_exit_2(tmp_path, freq_file):
    assert cli.main(["bnf"]) == 2
    assert cli.main(["bnf", str(tmp_path / "missing.txt"), str(freq_file)]) == 2


def test_scheme_constructed(tmp_path, freq_file, capsys):
    h = write(tmp_path, "lin.txt", linearizable(16))
    out = tmp_path / "sch"
    assert cli.main(["scheme", str(h), str(freq_file), "--cap", "16", "--out", str(out)]) == 0
    rec = json.loads((out / "scheme.json").read_text())
    assert rec["compliant"] and not rec["warnings"]
    assert all(r["decay_ok"] for r in rec["steps"])
    assert "compliant=True" in capsys.readouterr().out


def test_scheme_warning_path(tmp_path, freq_file, capsys):
    h = write(tmp_path, "lin.txt", linearizable(8))
    assert cli.main(["scheme", str(h), str(freq_file), "--cap", "8", "--r0", "0.05", "--out", str(tmp_path / "w")]) == 0
    out = capsys.readouterr().out
    assert "compliant=False" in out and "warning:" in out


def test_scheme_cap_too_small(tmp_path, freq_file):
    h = write(tmp_path, "lin.txt", linearizable(8))
    assert cli.main(["scheme", str(h), str(freq_file), "--cap", "3", "--out", str(tmp_path / "c")]) == 2


def test_verify_lemmas(capsys):
    assert cli.main(["verify", "lemmas", "--window", "-3", "3", "--degree", "4", "--theta-list", "0.5", "0.75"]) == 0
    assert capsys.readouterr().out.count("keys=") == 2


def test_verify_norms(capsys):
    assert cli.main(["verify", "norms", "--pairs", "3", "--seed", "4", "--samples", "100"]) == 0
    assert "checks failed=0" in capsys.readouterr().out


def test_verify_divisors(capsys):
    assert cli.main(["verify", "divisors", "--samples", "40", "--seed", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[0] == "gamma" and len(lines) == 4
