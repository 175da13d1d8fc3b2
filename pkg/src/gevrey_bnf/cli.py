"""Command-line entry point ``gevrey-bnf``.

Subcommands::

    gevrey-bnf bnf HAM FREQ --target 6 --out DIR [--linearizable]
    gevrey-bnf verify {lemmas,norms,divisors} [...]
    gevrey-bnf scheme HAM FREQ --cap 16 --s0 1 --r0 auto --out DIR

Exit codes: 0 success, 1 verification violation, 2 invalid input,
3 resonance, 4 not linearizable, 5 decay violation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import mpmath

from . import __version__
from .errors import DecayViolation, NotLinearizableError, ResonanceError, ValidationError
from .formal_hamiltonian import dumps, random_hamiltonian, read_hamiltonian
from .scalars import field_from_label

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_RESONANCE, EXIT_NOT_LINEARIZABLE, EXIT_DECAY = 0, 1, 2, 3, 4, 5


def _json_default(x):
    if hasattr(x, "_mpf_"):
        return mpmath.nstr(x, 17)
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, name), "w") as fh:
        fh.write(text)


def _write_json(out, name, obj):
    _write(out, name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _load_inputs(args):
    from .small_divisors import read_frequency

    field = field_from_label(args.precision) if args.precision else None
    H = read_hamiltonian(args.hamiltonian, field)
    freq = read_frequency(args.frequency)
    if args.gamma is not None:
        freq.gamma = args.gamma
    return H, freq


def command_bnf(args) -> int:
    from .normal_form import bnf, format_steps, linearizable_bnf

    H, freq = _load_inputs(args)
    if args.linearizable:
        steps = linearizable_bnf(H, args.i_max, freq)
        for st in steps:
            if st.generator is not None:
                _write(args.out, f"generator_{st.i}.txt", dumps(st.generator))
        _write(args.out, "remainder.txt", dumps(steps[-1].P))
        _write(args.out, "report.txt", format_steps(steps))
        _write_json(args.out, "steps.json", [s.as_dict() for s in steps])
        sys.stdout.write(format_steps(steps))
        return EXIT_OK
    res = bnf(H, args.target, freq)
    for k, S in enumerate(res.generators):
        _write(args.out, f"generator_{k}.txt", dumps(S))
    _write(args.out, "normal_form.txt", dumps(res.Z))
    if res.remainder is not None:
        _write(args.out, "remainder.txt", dumps(res.remainder))
    text = format_steps(res.steps)
    text += f"normal form terms: {len(res.Z)}\nremainder min degree: {res.remainder_min_degree}\n"
    _write(args.out, "report.txt", text)
    _write_json(args.out, "steps.json", {
        "steps": [s.as_dict() for s in res.steps],
        "normal_form_terms": len(res.Z),
        "remainder_min_degree": res.remainder_min_degree,
    })
    sys.stdout.write(text)
    return EXIT_OK


def _verify_lemmas(args) -> int:
    from .small_divisors import verify_rearrangement_lemmas

    bad = 0
    for theta in args.theta_list:
        rep = verify_rearrangement_lemmas(tuple(args.window), args.degree, theta)
        sys.stdout.write(rep.format())
        bad += rep.n_violations
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


def _verify_norms(args) -> int:
    from .gevrey_norms import GevreyParams, norm_lower, norm_upper, verify_norm_inequalities

    params = GevreyParams(args.r, args.s, args.p, args.theta)
    field = field_from_label(args.precision or "rational")
    lo, hi = args.window
    failures = []
    for k in range(args.pairs):
        F = random_hamiltonian(args.seed * 1000 + 2 * k, (lo, hi), 1, args.degree, n_terms=args.terms, field=field)
        G = random_hamiltonian(args.seed * 1000 + 2 * k + 1, (lo, hi), 1, args.degree, n_terms=args.terms, field=field)
        low, up = norm_lower(F, params, args.samples, args.seed), norm_upper(F, params)
        if low > up * (1 + 1e-9):
            failures.append((k, "sandwich", low, up))
        rep = verify_norm_inequalities(F, G, params, args.rho, samples=args.samples, seed=args.seed)
        for c in rep.checks:
            if not c.passed:
                failures.append((k, c.name, c.lhs, c.rhs))
    sys.stdout.write(f"pairs={args.pairs} checks failed={len(failures)}\n")
    for k, name, lhs, rhs in failures[:10]:
        sys.stdout.write(f"  pair {k}: {name} lhs={lhs} rhs={rhs}\n")
    return EXIT_OK if not failures else EXIT_VIOLATION


def _verify_divisors(args) -> int:
    from .small_divisors import measure_estimate

    rows = [measure_estimate(g, tuple(args.caps), args.samples, args.seed) for g in sorted(args.gamma_list, reverse=True)]
    sys.stdout.write(f"{'gamma':>10}  {'fraction':>9}  {'low':>8}  {'high':>8}  {'ratio':>8}\n")
    prev = None
    ok = True
    for r in rows:
        ratio = (prev.fraction / r.fraction) if prev is not None and r.fraction > 0 else math.nan
        sys.stdout.write(f"{r.gamma:10.3g}  {r.fraction:9.4f}  {r.low:8.4f}  {r.high:8.4f}  {ratio:8.3g}\n")
        if prev is not None and r.fraction > prev.fraction:
            ok = False
        prev = r
    if not ok:
        sys.stdout.write("violation: failing fraction increased as gamma decreased\n")
    return EXIT_OK if ok else EXIT_VIOLATION


def command_verify(args) -> int:
    return {"lemmas": _verify_lemmas, "norms": _verify_norms, "divisors": _verify_divisors}[args.suite](args)


def command_scheme(args) -> int:
    from .convergence_scheme import Schedule, radius_for_smallness, run_scheme, smallness_threshold
    from .normal_form import perturbation

    if args.cap < 4:
        sys.stderr.write(f"error: cap {args.cap} < 4\n")
        return EXIT_INPUT
    H, freq = _load_inputs(args)
    H = H.filter_degree(hi=args.cap).with_cap(min(args.cap, H.degree_cap))
    sm = smallness_threshold(args.s0, args.theta, args.chi, args.K_cal)
    if args.r0 == "auto":
        r0 = radius_for_smallness(perturbation(H, freq), freq.gamma, sm.log_eps0, args.s0, args.p, args.theta)
    else:
        r0 = mpmath.mpf(args.r0) if float(args.r0) < 1e-300 else float(args.r0)
    sch = Schedule(r0, args.s0, args.chi, args.i_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = run_scheme(H, freq, sch, cap=args.cap, p=args.p, theta=args.theta, smallness=sm)
    text = rep.format()
    sys.stdout.write(text)
    _write(args.out, "scheme.txt", text)
    _write_json(args.out, "scheme.json", {
        "compliant": rep.compliant,
        "chi_margin": rep.chi_margin,
        "log10_eps0": float(mpmath.log10(rep.eps0)) if rep.eps0 > 0 else None,
        "log10_threshold": sm.log_eps0 / math.log(10),
        "warnings": rep.warnings,
        "steps": rep.records(),
    })
    return EXIT_OK


def _add_common(p, with_io=True):
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", default=None, help="rational, f64 or mp:<bits>")
    if with_io:
        p.add_argument("--gamma", type=float, default=None, help="override the frequency file's gamma")
        p.add_argument("--out", default="out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gevrey-bnf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bnf", help="normal form of a Hamiltonian file")
    p.add_argument("hamiltonian")
    p.add_argument("frequency")
    p.add_argument("--target", type=int, default=6)
    p.add_argument("--linearizable", action="store_true", help="run the degree-doubling scheme instead")
    p.add_argument("--i-max", dest="i_max", type=int, default=4)
    _add_common(p)
    p.set_defaults(func=command_bnf)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=["lemmas", "norms", "divisors"])
    p.add_argument("--window", type=int, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--theta-list", dest="theta_list", type=float, nargs="+", default=None)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--terms", type=int, default=4)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--gamma-list", dest="gamma_list", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    p.add_argument("--caps", type=int, nargs=2, default=[3, 6], metavar=("ELL", "SITE"))
    _add_common(p, with_io=False)
    p.set_defaults(func=command_verify)

    p = sub.add_parser("scheme", help="tracked convergence run")
    p.add_argument("hamiltonian")
    p.add_argument("frequency")
    p.add_argument("--cap", type=int, default=16)
    p.add_argument("--s0", type=float, default=1.0)
    p.add_argument("--r0", default="auto", help="radius, or 'auto' to meet the smallness threshold")
    p.add_argument("--chi", type=float, default=15 / 14)
    p.add_argument("--i-max", dest="i_max", type=int, default=4)
    p.add_argument("--K-cal", dest="K_cal", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=command_scheme)
    return ap


def _suite_defaults(args):
    if getattr(args, "command", None) != "verify":
        return
    if args.suite == "lemmas":
        args.window = args.window or [-5, 5]
        args.degree = args.degree or 6
        args.theta_list = args.theta_list or [args.theta]
    elif args.suite == "norms":
        args.window = args.window or [-2, 2]
        args.degree = args.degree or 4
        args.samples = args.samples or 200
    else:
        args.samples = args.samples or 500


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    _suite_defaults(args)
    try:
        return args.func(args)
    except ResonanceError as e:
        sys.stderr.write(f"resonance: {e}\n")
        return EXIT_RESONANCE
    except NotLinearizableError as e:
        sys.stderr.write(f"not linearizable: {e}\n")
        return EXIT_NOT_LINEARIZABLE
    except DecayViolation as e:
        sys.stderr.write(f"decay violation: {e}\n")
        return EXIT_DECAY
    except (ValidationError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
