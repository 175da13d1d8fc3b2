"""Radius and width schedules of the degree-doubling scheme with tracked norms.

The iteration ``H_{i+1} = exp(ad_{S_i}) H_i`` of
:func:`~gevrey_bnf.normal_form.linearizable_bnf` is followed with Gevrey
norms at shrinking radii ``r_i`` and growing widths ``s_i``:

    rho_i = r0 / (2 C <i>^2),  sigma_i = s0 / (C <i>^2),  C = 1 + pi^2/6,

with ``<0> = 1`` so that ``sum rho_i = r0/2`` and ``sum sigma_i = s0``.
The tracked quantity is ``eps_i = gamma^-1 norm_upper(P_i; r_i, s_i)``,
compared against ``eps_0 exp(-chi^i)``.

The smallness threshold involves ``exp(C_2 n^(6/theta))`` with a huge
``C_2``, so it is handled in log scale and the radius ``r0`` that meets it
is an ``mpmath.mpf`` far below the float range.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import mpmath
import numpy as np

from .errors import DecayViolation, ValidationError
from .formal_hamiltonian import FormalHamiltonian, Frequency
from .gevrey_norms import GevreyParams, norm_upper
from .normal_form import linearizable_bnf, perturbation
from .small_divisors import c1_surrogate, homological_log_K, exponent_bound, verify_homological_bound

C_TILDE = 1 + math.pi**2 / 6


def jap(n: int) -> int:
    return max(abs(n), 1)


@dataclass(frozen=True)
class Schedule:
    """Radii ``r_i``, widths ``s_i`` and degrees ``d_i = 2^i``.

    ``r0`` may be an ``mpmath.mpf``; all radii are then ``mpf``.
    """

    r0: object
    s0: float
    chi: float = 15 / 14
    i_max: int = 4
    C_tilde: float = C_TILDE

    def __post_init__(self):
        if not self.r0 > 0 or not self.s0 > 0:
            raise ValidationError("r0 and s0 must be positive")
        if not 1 < self.chi < 2:
            raise ValidationError("chi must lie in (1, 2)")
        if self.i_max < 0:
            raise ValidationError("i_max must be non-negative")

    def rho(self, i: int):
        return self.r0 / (2 * self.C_tilde * jap(i) ** 2)

    def sigma(self, i: int) -> float:
        return self.s0 / (self.C_tilde * jap(i) ** 2)

    def r(self, i: int):
        out = self.r0
        for k in range(i):
            out = out - self.rho(k)
        return out

    def s(self, i: int) -> float:
        return self.s0 + sum(self.sigma(k) for k in range(i))

    @staticmethod
    def d(i: int) -> int:
        return 2**i


# chi condition

@dataclass
class ChiMargin:
    value: float
    argmax: int
    n_scanned: int
    tail_bound: float


def _chi_term(n, chi, C):
    x = 1.0 / (2 * C * jap(n) ** 2)
    a = 2.0 ** (n + 1) * math.log1p(-x) if n < 1000 else -math.inf
    b = chi**n * (chi - 1) if n * math.log(chi) < 700 else math.inf
    if a == -math.inf or b == math.inf:
        # e^lb - e^la in log form
        la = (n + 1) * math.log(2) + math.log(-math.log1p(-x))
        lb = n * math.log(chi) + math.log(chi - 1)
        if lb <= la:
            return -math.inf
        return math.exp(lb) * -math.expm1(la - lb) if lb < 709 else math.inf
    return a + b


def chi_margin_details(chi: float, C_tilde: float = C_TILDE, n_max: int = 60) -> ChiMargin:
    """Sup over ``n >= 0`` of ``2^(n+1) ln(1 - 1/(2 C <n>^2)) + chi^n (chi - 1)``.

    Terms are scanned for ``n <= N``; past ``N`` the bound
    ``ln(1 - x) <= -x`` gives ``term <= 2^n/(C n^2) (q(n) - 1)`` with
    ``q(n) = C (chi - 1) n^2 (chi/2)^n``. Once ``q`` is decreasing and below
    1 at ``N >= 3`` the tail is at most ``2^N/(C N^2) (q(N) - 1) < 0``.
    ``N`` starts at ``n_max`` and grows until this certificate holds.
    """
    if not 1 < chi < 2:
        raise ValidationError("chi must lie in (1, 2)")
    best, arg = -math.inf, 0
    n = 0
    N = max(3, int(n_max))
    while True:
        while n <= N:
            t = _chi_term(n, chi, C_tilde)
            if t > best:
                best, arg = t, n
            n += 1
        log_q = math.log(C_tilde * (chi - 1)) + 2 * math.log(N) + N * math.log(chi / 2)
        decreasing = (1 + 1 / N) ** 2 * (chi / 2) < 1
        if decreasing and log_q < 0:
            log_scale = N * math.log(2) - math.log(C_tilde * N * N)
            tail = -math.exp(log_scale) * (1 - math.exp(log_q)) if log_scale < 700 else -math.inf
            return ChiMargin(max(best, tail), arg, N, tail)
        N *= 2


def chi_margin(chi: float, C_tilde: float = C_TILDE, n_max: int = 60) -> float:
    """Value of :func:`chi_margin_details`; the scheme needs it ``<= -0.1``."""
    return chi_margin_details(chi, C_tilde, n_max).value


# smallness

@dataclass
class Smallness:
    """Admissible ``eps_0`` in log scale.

    ``log_eps0 = -ln K_cal - log_sup``, where ``log_sup`` is the log of the
    sup over ``n`` of ``exp(C_2 n^(6/theta)) <n>^2 max(e^(n - chi^n), e^(-(2-chi) chi^n))``.
    """

    log_eps0: float
    log_sup: float
    argmax: int
    c1: float
    c2: float
    n_scanned: int
    K_cal: float

    @property
    def eps0(self):
        return mpmath.exp(mpmath.mpf(self.log_eps0))


def _log_smallness_term(n, c2, a, chi):
    lc = n * np.log(chi)
    cn = np.exp(np.minimum(lc, 700.0))
    body = np.maximum(n - cn, -(2 - chi) * cn)
    return c2 * np.maximum(n, 1.0) ** a + 2 * np.log(np.maximum(n, 1.0)) + body


def smallness_threshold(s0: float, theta: float, chi: float = 15 / 14, K_cal: float = 1.0,
                        C_tilde: float = C_TILDE, c1: float | None = None) -> Smallness:
    """Largest ``eps_0`` allowed by the smallness condition.

    ``C_2 = C_1 C^(3/theta) s0^(-3/theta)`` with ``C_1`` from
    :func:`~gevrey_bnf.small_divisors.c1_surrogate` at the largest loss
    ``sigma_0 = s0 / C``. The scan stops once the terms have decreased for
    10 consecutive ``n`` and the upper bound
    ``U(n) = C_2 n^a + 2 ln n + n - (2 - chi) chi^n`` (``a = 6/theta``) is
    certified decreasing past the stopping point, which holds when
    ``N >= (a - 1)/ln chi`` and ``U'(N) < 0``.
    """
    if s0 <= 0 or K_cal <= 0:
        raise ValidationError("s0 and K_cal must be positive")
    if not 1 < chi < 2:
        raise ValidationError("chi must lie in (1, 2)")
    if c1 is None:
        c1 = c1_surrogate(theta, sigma_max=s0 / C_tilde)
    a = 6 / theta
    c2 = c1 * C_tilde ** (3 / theta) * s0 ** (-3 / theta)
    lchi = math.log(chi)
    best, arg = -math.inf, 0
    start, chunk = 0, 4096
    while True:
        n = np.arange(start, start + chunk, dtype=float)
        vals = _log_smallness_term(n, c2, a, chi)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, arg = float(vals[k]), start + k
        # candidate stopping points: 10 decreasing terms behind them
        dec = np.diff(vals) < 0
        run = np.convolve(dec.astype(int), np.ones(10, dtype=int), mode="valid") == 10
        for p in np.nonzero(run)[0]:
            N = start + p + 10
            if N < (a - 1) / lchi or N < 1:
                continue
            if N * lchi > 700:
                continue
            dU = a * c2 * N ** (a - 1) + 2 / N + 1 - (2 - chi) * chi**N * lchi
            if dU < 0:
                U = c2 * N**a + 2 * math.log(N) + N - (2 - chi) * chi**N
                log_sup = max(best, U)
                return Smallness(-math.log(K_cal) - log_sup, log_sup, int(arg), c1, c2, int(N), K_cal)
        start += chunk
        if start * lchi > 700:
            raise ValidationError("smallness scan did not certify a tail")


def radius_for_smallness(P0: FormalHamiltonian, gamma: float, log_eps0: float, s0: float,
                         p: float = 1.0, theta: float = 0.5, safety: float = math.log(2)):
    """An ``mpf`` radius ``r0 <= 1`` with ``gamma^-1 norm_upper(P0; r0, s0) <= exp(log_eps0 - safety)``.

    Uses ``norm_upper(P0; r) <= r^d sum_k U_k`` for ``r <= 1``, ``d`` the
    minimal degree of ``P0``.
    """
    if P0.is_zero():
        return mpmath.mpf(1)
    d = P0.min_degree
    unit = norm_upper(P0, GevreyParams(1.0, s0, p, theta))
    log_r = (log_eps0 - safety + math.log(gamma) - math.log(unit)) / d
    return mpmath.exp(mpmath.mpf(min(log_r, 0.0)))


# tracked run

@dataclass
class SchemeStep:
    i: int
    r: object
    s: float
    min_degree: float
    n_terms: int
    eps: object
    bound: object
    smallest_divisor: float
    generator_norm: object = None
    log_generator_bound: float = math.nan
    generator_ok: bool = True
    kernel_term: object = None
    kernel_ok: bool = True
    tail_term: object = None
    tail_reference: object = None
    displacement: object = None
    displacement_ok: bool = True
    chain_breaks: int = 0

    @property
    def decay_ok(self) -> bool:
        return self.eps <= self.bound

    def as_dict(self):
        return {
            "i": self.i,
            "log10_r": _log10(self.r),
            "s": self.s,
            "min_degree": self.min_degree,
            "log10_eps": _log10(self.eps),
            "log10_bound": _log10(self.bound),
            "decay_ok": self.decay_ok,
            "smallest_divisor": self.smallest_divisor,
            "log10_gen_norm": _log10(self.generator_norm),
            "log10_gen_bound": self.log_generator_bound / math.log(10)
            if math.isfinite(self.log_generator_bound) else self.log_generator_bound,
            "displacement_ok": self.displacement_ok,
        }


def _log10(x):
    if x is None:
        return math.nan
    if x == 0:
        return -math.inf
    return float(mpmath.log10(x)) if hasattr(x, "_mpf_") else math.log10(float(x))


@dataclass
class SchemeReport:
    schedule: Schedule
    gamma: float
    eps0: object
    smallness: Smallness
    compliant: bool
    chi_margin: float
    steps: list = dc_field(default_factory=list)
    warnings: list = dc_field(default_factory=list)

    @property
    def decay_ok(self) -> bool:
        return all(s.decay_ok for s in self.steps)

    def records(self):
        return [s.as_dict() for s in self.steps]

    def format(self) -> str:
        head = [
            f"log10_eps0={_log10(self.eps0):.6g} log10_threshold={self.smallness.log_eps0 / math.log(10):.6g} "
            f"compliant={self.compliant} chi={self.schedule.chi:.6g} chi_margin={self.chi_margin:.6g}"
        ]
        head += [f"warning: {w}" for w in self.warnings]
        rows = self.records()
        if not rows:
            return "\n".join(head) + "\n"
        cols = list(rows[0])
        cells = [cols] + [[_cell(r[c]) for c in cols] for r in rows]
        widths = [max(len(row[k]) for row in cells) for k in range(len(cols))]
        body = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
        return "\n".join(head + body) + "\n"


def _cell(x):
    if isinstance(x, float):
        return "inf" if x == math.inf else "-inf" if x == -math.inf else f"{x:.6g}"
    return str(x)


def run_scheme(H0: FormalHamiltonian, freq: Frequency, schedule: Schedule, gamma: float | None = None,
               cap: int | None = None, p: float = 1.0, theta: float = 0.5, K_cal: float = 1.0,
               smallness: Smallness | None = None) -> SchemeReport:
    """Run the degree-doubling scheme and track Gevrey norms along the schedule.

    At step ``i`` the report holds ``eps_i``, the bound
    ``eps_0 exp(-chi^i)``, the generator norm ``norm_upper(S_i; r_i, s_{i+1})``
    with the per-key bound ``gamma^-1 max K norm_upper(P_i)`` it must
    satisfy, the explicit log bound ``-ln gamma + 18 i_sharp ln i_sharp +
    ln norm_upper(P_i)``, and the split of ``P_{i+1}`` into its kernel part
    (scaled by ``(r_{i+1}/r_i)^(2^(i+1))``) and the Lie-series tails.

    A run is compliant when ``eps_0`` is below the smallness threshold.
    Otherwise a warning is issued and the run continues.

    Raises
    ------
    DecayViolation
        In a compliant run, if some ``eps_i`` exceeds its bound, or if a
        certified per-step inequality fails.
    NotLinearizableError, ResonanceError
        From the normalization.
    """
    gamma = freq.gamma if gamma is None else gamma
    if cap is not None:
        H0 = H0.filter_degree(hi=cap).with_cap(min(cap, H0.degree_cap))
    P0 = perturbation(H0, freq)
    sch = schedule
    if smallness is None:
        smallness = smallness_threshold(sch.s0, theta, sch.chi, K_cal, sch.C_tilde)
    params = lambda r, s: GevreyParams(r, s, p, theta)  # noqa: E731
    eps0 = norm_upper(P0, params(sch.r0, sch.s0)) / gamma
    log_eps0 = -math.inf if eps0 == 0 else float(mpmath.log(eps0))
    compliant = log_eps0 <= smallness.log_eps0
    margin = chi_margin(sch.chi, sch.C_tilde)
    report = SchemeReport(sch, gamma, eps0, smallness, compliant, margin)
    if margin > -0.1:
        report.warnings.append(f"chi margin {margin:.6g} above -0.1")
    if not compliant:
        msg = f"eps0 = 10^{log_eps0 / math.log(10):.6g} above the smallness threshold 10^{smallness.log_eps0 / math.log(10):.6g}"
        report.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    lin = linearizable_bnf(H0, sch.i_max, freq)
    for k, st in enumerate(lin):
        i = st.i
        r_i, s_i = sch.r(i), sch.s(i)
        nP = norm_upper(st.P, params(r_i, s_i))
        # the decay bound starts at i = 1; P_0 itself defines eps_0
        bound = eps0 if i == 0 else eps0 * mpmath.exp(-mpmath.mpf(sch.chi) ** i)
        step = SchemeStep(i, r_i, s_i, st.min_degree, st.n_terms, nP / gamma, bound, st.smallest_divisor)
        if st.generator is not None:
            _generator_checks(step, st, freq, sch, gamma, theta, params, nP)
            if k + 1 < len(lin):
                _split_checks(step, st, lin[k + 1].P, sch, params, nP)
        report.steps.append(step)
        if compliant:
            _raise_if_broken(step)
    return report


def _generator_checks(step, st, freq, sch, gamma, theta, params, nP):
    i = step.i
    s_next = sch.sigma(i) + step.s
    R = st.P.range_part()
    S = st.generator
    sig = sch.sigma(i)
    gnorm = norm_upper(S, params(step.r, s_next))
    step.generator_norm = gnorm
    logK = max(homological_log_K(freq, key, gamma, sig, theta) for key in R.terms)
    step.generator_ok = bool(gnorm <= mpmath.exp(mpmath.mpf(logK)) * norm_upper(R, params(step.r, step.s)) / gamma * (1 + 1e-9))
    sig_c = min(sig, 1.0)
    hom = verify_homological_bound(freq, R, gamma, sig_c, theta)
    step.chain_breaks = len(hom.chain_breaks)
    _, B = exponent_bound(sig_c, theta)
    step.log_generator_bound = -math.log(gamma) + B + float(mpmath.log(nP)) if nP > 0 else -math.inf
    step.displacement = step.r * gnorm
    step.displacement_ok = bool(step.displacement <= sch.r0 / 2**i)


def _split_checks(step, st, P_next, sch, params, nP):
    i = step.i
    r1, s1 = sch.r(i + 1), sch.s(i + 1)
    K = st.P.kernel_part()
    tails = P_next - K
    kt = norm_upper(K, params(r1, s1))
    step.kernel_term = kt
    ratio = (r1 / step.r) ** sch.d(i + 1)
    step.kernel_ok = bool(kt <= ratio * nP * (1 + 1e-9))
    step.tail_term = norm_upper(tails, params(r1, s1))
    step.tail_reference = 16 * math.e * step.r / sch.rho(i) * nP * norm_upper(st.generator, params(r1, s1))


def _raise_if_broken(step):
    if not step.decay_ok:
        terms = {"kernel": step.kernel_term, "tails": step.tail_term}
        name = max((n for n in terms if terms[n] is not None), key=lambda n: terms[n], default="remainder")
        raise DecayViolation(step.i, name, step.eps, step.bound)
    if not step.generator_ok:
        raise DecayViolation(step.i, "generator", step.generator_norm, step.log_generator_bound)
    if not step.kernel_ok:
        raise DecayViolation(step.i, "kernel", step.kernel_term, None)
