"""Homological equation, Birkhoff normal form and degree doubling.

The quadratic part ``D_omega = sum_j omega_j |u_j|^2`` is never stored: a
Hamiltonian is handled as ``D_omega + P`` with the perturbation ``P`` of
degree at least 1, and brackets with ``D_omega`` are applied coefficientwise,

    {D_omega, u^alpha ubar^beta} = i omega.(beta - alpha) u^alpha ubar^beta.

If ``{D_omega, S} = Pi^R P`` the conjugated perturbation is

    exp(ad_S)(D_omega + P) - D_omega
        = Pi^K P - sum_{k>=1} ad_S^k Pi^R P / (k+1)! + sum_{k>=1} ad_S^k P / k!,

which is what the iterations below evaluate; the cancellation of
``Pi^R P`` happens symbolically, so low degrees stay exactly empty even in
floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from .errors import (
    KernelInputError,
    NonConvergentError,
    NotLinearizableError,
    ResonanceError,
    ValidationError,
)
from .formal_hamiltonian import FormalHamiltonian, Frequency, format_key, key_degree
from .lie_algebra import lie_series, lie_transform, poisson


def _inv_factorial(k):
    return Fraction(1, math.factorial(k))


def _inv_factorial_shift(k):
    return Fraction(1, math.factorial(k + 1))


def divisor(freq: Frequency, key, field):
    """``omega . (beta - alpha)`` in the real type of ``field``."""
    a, b = key
    total = field.real(0)
    for s, e in b:
        total = total + field.real(freq.omega(s)) * e
    for s, e in a:
        total = total - field.real(freq.omega(s)) * e
    return total


def default_floor(freq: Frequency, key, field):
    """Resonance floor: 0 in exact mode, else ``1e-12 (1 + sum_j |beta_j - alpha_j| |omega_j|)``."""
    if field.exact:
        return 0
    a, b = key
    d = dict(b)
    for s, e in a:
        d[s] = d.get(s, 0) - e
    scale = sum(abs(e) * abs(float(freq.omega(s))) for s, e in d.items())
    return 1e-12 * (1.0 + scale)


def homological_operator(freq: Frequency, S: FormalHamiltonian) -> FormalHamiltonian:
    """``{D_omega, S}`` computed coefficientwise."""
    f = S.field
    t = {}
    for k, c in S.terms.items():
        if k[0] == k[1]:
            continue
        v = f.i * c * f.convert(divisor(freq, k, f))
        if not f.is_zero(v):
            t[k] = v
    return FormalHamiltonian(t, f, S.degree_cap)


def solve_homological(freq: Frequency, R: FormalHamiltonian, divisor_floor=None) -> FormalHamiltonian:
    """Solve ``{D_omega, S} = R`` for ``R`` in the range.

    Parameters
    ----------
    freq
        Frequencies.
    R
        Right-hand side with ``Pi^K R = 0``.
    divisor_floor
        Divisors with modulus below this raise; ``None`` selects
        :func:`default_floor` per key.

    Returns
    -------
    FormalHamiltonian
        ``S`` with ``S_{alpha,beta} = R_{alpha,beta} / (i omega.(beta - alpha))``.

    Raises
    ------
    KernelInputError
        If ``R`` has a key with ``alpha == beta``.
    ResonanceError
        On a divisor below the floor (exact zero in exact mode).
    """
    S, _ = _solve(freq, R, divisor_floor)
    return S


def _solve(freq, R, divisor_floor):
    f = R.field
    t = {}
    smallest = math.inf
    for k, c in R.terms.items():
        if k[0] == k[1]:
            raise KernelInputError(format_key(k))
        w = divisor(freq, k, f)
        floor = default_floor(freq, k, f) if divisor_floor is None else divisor_floor
        if f.real_is_zero(w) or abs(w) < floor:
            raise ResonanceError(format_key(k), w)
        smallest = min(smallest, abs(float(w)))
        v = f.over_i(c, w)
        if not f.is_zero(v):
            t[k] = v
    return FormalHamiltonian(t, f, R.degree_cap), smallest


def conjugate_perturbation(S, P, freq, cap=None, solved_range=None):
    """Perturbation of ``exp(ad_S)(D_omega + P)``.

    If ``solved_range`` is given it must satisfy
    ``{D_omega, S} = solved_range``, and ``solved_range`` is the range part
    of ``P`` (the usual normalizing step); the closed form in the module
    docstring is used. Otherwise the general expansion
    ``sum_{k>=1} ad_S^{k-1} {S, D_omega} / k! + exp(ad_S) P`` is evaluated.
    """
    if cap is None:
        cap = min(S.degree_cap, P.degree_cap)
    if solved_range is not None:
        return _conjugate_solved(S, P, solved_range, cap)
    W = -homological_operator(freq, S)
    return lie_series(S, W.with_cap(cap), _inv_factorial_shift, cap) + lie_transform(S, P, cap)


def _conjugate_solved(S, P, R, cap):
    # Pi^K P + sum_{k>=1} ad_S^k X_k with X_k = P/k! - R/(k+1)!, by Horner:
    # the inner sums get k fewer applications of ad_S and are truncated earlier
    head = P.kernel_part().with_cap(cap)
    if S.is_zero() or P.is_zero():
        return head
    s = S.min_degree
    m = (cap - P.min_degree) // s
    Y = None
    for k in range(m, 0, -1):
        top = cap - k * s
        X = P.with_cap(top).scale(_inv_factorial(k)) - R.with_cap(top).scale(_inv_factorial(k + 1))
        if Y is not None:
            X = X + poisson(S, Y, top)
        Y = X
    return head + poisson(S, Y, cap) if Y is not None else head


def conjugate_d_omega(S, freq, cap=None):
    """Perturbation part of ``exp(ad_S) D_omega``, i.e. ``exp(ad_S) D_omega - D_omega``."""
    if cap is None:
        cap = S.degree_cap
    W = -homological_operator(freq, S)
    return lie_series(S, W.with_cap(cap), _inv_factorial_shift, cap)


def perturbation(H: FormalHamiltonian, freq: Frequency) -> FormalHamiltonian:
    """Strip the quadratic part, checking it agrees with ``freq``.

    Raises
    ------
    ValidationError
        If a degree-0 term is not ``omega_j |u_j|^2``.
    """
    f = H.field
    quad = H.filter_degree(hi=0)
    if quad.is_zero():
        return H
    for (a, b), c in quad.terms.items():
        if a != b or len(a) != 1 or a[0][1] != 1:
            raise ValidationError(f"quadratic term {format_key((a, b))} is not of the form |u_j|^2")
        j = a[0][0]
        w = f.convert(freq.omega(j))
        if f.exact:
            ok = f.is_zero(c - w)
        else:
            ok = float(f.modulus(c - w)) <= 1e-12 * (1.0 + float(f.modulus(w)))
        if not ok:
            raise ValidationError(f"coefficient of |u_{j}|^2 is {c}, frequency gives {w}")
    return H.filter_degree(lo=1)


@dataclass
class StepRecord:
    """Diagnostics of one normalizing step."""

    i: int
    min_degree: float
    n_terms: int
    max_generator: float
    smallest_divisor: float

    def as_dict(self):
        return {
            "i": self.i,
            "min_degree": self.min_degree,
            "n_terms": self.n_terms,
            "max_generator": self.max_generator,
            "smallest_divisor": self.smallest_divisor,
        }


@dataclass
class BNFResult:
    """Output of :func:`bnf`.

    Attributes
    ----------
    generators
        ``S_0, S_1, ...`` in application order.
    Z
        Normal form truncated at the target degree.
    remainder_min_degree
        Every remaining term has at least this degree.
    steps
        Per-step diagnostics.
    remainder
        Perturbation left after the last step, beyond the target degree.
    """

    generators: list
    Z: FormalHamiltonian
    remainder_min_degree: int
    steps: list = dc_field(default_factory=list)
    remainder: FormalHamiltonian | None = None


def _record(i, P, S, smallest):
    return StepRecord(i, P.min_degree, len(P), S.max_abs() if S is not None else 0.0, smallest)


def bnf(H: FormalHamiltonian, target_degree: int, freq: Frequency, divisor_floor=None) -> BNFResult:
    """Birkhoff normal form up to ``target_degree``.

    ``H`` is ``D_omega + Z + R`` with ``Z`` in the kernel from degree 2 and
    ``R`` of degree at least ``d >= 1``; quadratic terms in ``H`` are
    checked against ``freq`` and removed. Steps of degree ``2i + d`` are
    taken until no range term of degree at most ``target_degree`` is left;
    a degree-1 range part is first removed by one preliminary step.

    Raises
    ------
    ResonanceError
        From the homological equation.
    NonConvergentError
        If a step fails to raise the degree of the remainder.
    """
    P = perturbation(H, freq)
    if P.degree_cap < target_degree:
        raise ValidationError(f"Hamiltonian known to degree {P.degree_cap} < target {target_degree}")
    cap = target_degree
    P = P.with_cap(cap)
    f = P.field
    generators, steps = [], []
    R = P.range_part()
    if R.is_zero():
        return BNFResult([], P.kernel_part(), cap + 1, [], FormalHamiltonian({}, f, cap))
    d = R.min_degree
    if d == 1:
        S, smallest = _solve(freq, R, divisor_floor)
        H0 = conjugate_perturbation(S, P, freq, cap, solved_range=R)
        steps.append(_record(-1, P, S, smallest))
        generators.append(S)
        Z = P.kernel_part().filter_degree(hi=2)
        P = H0 - Z
        d = 2
    else:
        K = P.kernel_part()
        Z = K.filter_degree(hi=d - 1)
        P = P - Z
    i = 0
    while True:
        if P.range_part().is_zero():
            Z = Z + P
            P = FormalHamiltonian({}, f, cap)
            steps.append(_record(i, P, None, math.inf))
            break
        lo = 2 * i + d
        if P.min_degree < lo:
            raise NonConvergentError(f"step {i}: remainder has degree {P.min_degree} < {lo}")
        R = P.range_part()
        S, smallest = _solve(freq, R, divisor_floor)
        steps.append(_record(i, P, S, smallest))
        generators.append(S)
        Hn = conjugate_perturbation(S, Z + P, freq, cap, solved_range=R)
        Z = Z + P.kernel_part().filter_degree(hi=lo + 1)
        P = Hn - Z
        i += 1
    return BNFResult(generators, Z.with_cap(cap), cap + 1, steps, P)


def normal_form_invariant(H: FormalHamiltonian, target_degree: int, freq: Frequency, divisor_floor=None):
    """The normal form ``Z_H`` truncated at ``target_degree``."""
    return bnf(H, target_degree, freq, divisor_floor).Z


@dataclass
class LinearizationStep:
    """One iterate ``H_i = D_omega + P_i`` of the degree-doubling scheme.

    ``generator`` is ``S_i`` (``None`` for the last iterate) and
    ``dropped`` the largest modulus of kernel coefficients discarded as
    round-off in inexact modes.
    """

    i: int
    P: FormalHamiltonian
    generator: FormalHamiltonian | None
    min_degree: float
    n_terms: int
    max_generator: float
    smallest_divisor: float
    dropped: float = 0.0

    def as_dict(self):
        return {
            "i": self.i,
            "min_degree": self.min_degree,
            "n_terms": self.n_terms,
            "max_generator": self.max_generator,
            "smallest_divisor": self.smallest_divisor,
            "dropped": self.dropped,
        }


def _drop_small(K: FormalHamiltonian, tol):
    f = K.field
    kept, worst = {}, 0.0
    for k, c in K.terms.items():
        m = float(f.modulus(c))
        if m <= tol:
            worst = max(worst, m)
        else:
            kept[k] = c
    return FormalHamiltonian(kept, f, K.degree_cap), worst


def linearizable_bnf(H: FormalHamiltonian, i_max: int, freq: Frequency, divisor_floor=None, rel_tol=1e-9):
    """Degree-doubling normalization of a formally linearizable ``H``.

    Runs ``{D_omega, S_i} = Pi^R P_i``, ``H_{i+1} = exp(ad_{S_i}) H_i`` for
    ``i < i_max`` and returns the iterates ``P_0, ..., P_{i_max}`` (fewer if
    the perturbation vanishes). At every iterate the kernel part below degree
    ``max(2^{i+1}, d_R)`` must vanish, where ``d_R`` is the lowest range
    degree; this is where a non-linearizable ``H`` is detected.

    In inexact modes kernel coefficients of modulus at most
    ``rel_tol * max|P_0|`` count as zero and are discarded.

    Raises
    ------
    NotLinearizableError
        If a kernel coefficient below the tested degree is nonzero.
    ResonanceError
        From the homological equation.
    """
    P = perturbation(H, freq)
    cap = P.degree_cap
    f = P.field
    tol = 0.0 if f.exact else rel_tol * max(P.max_abs(), 1e-300)
    out = []
    for i in range(i_max + 1):
        R = P.range_part()
        d_R = R.min_degree if not R.is_zero() else cap + 1
        top = max(2 ** (i + 1), d_R) - 1
        low_K = P.kernel_part().filter_degree(hi=top)
        dropped = 0.0
        if not low_K.is_zero():
            low_K, dropped = _drop_small(low_K, tol)
            if not low_K.is_zero():
                raise NotLinearizableError(i, {format_key(k): c for k, c in sorted(low_K.terms.items())})
            P = P.filter_degree(lo=top + 1).with_cap(cap) + R.filter_degree(hi=top)
        if P.is_zero() or i == i_max:
            out.append(LinearizationStep(i, P, None, P.min_degree, len(P), 0.0, math.inf, dropped))
            if P.is_zero():
                break
            continue
        R = P.range_part()
        S, smallest = _solve(freq, R, divisor_floor)
        out.append(LinearizationStep(i, P, S, P.min_degree, len(P), S.max_abs(), smallest, dropped))
        P = conjugate_perturbation(S, P, freq, cap, solved_range=R)
    return out


def format_steps(records) -> str:
    """Aligned text table of step diagnostics."""
    rows = [r.as_dict() for r in records]
    if not rows:
        return "(no steps)\n"
    cols = list(rows[0])
    cells = [[str(c) for c in cols]] + [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[k]) for row in cells) for k in range(len(cols))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells) + "\n"


def _fmt(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.6g}"
    return str(x)
