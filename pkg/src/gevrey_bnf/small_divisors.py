"""Diophantine frequencies, rearrangement inequalities and divisor bounds.

Frequencies are ``omega_j = j**2 + xi_j`` with ``xi_j`` uniform on
``[-1/2, 1/2]`` (see :class:`~gevrey_bnf.formal_hamiltonian.Frequency`).
A frequency is Diophantine with constant ``gamma`` when

    |omega . l| > gamma prod_n 1 / (1 + l_n^2 <n>^2)

for every finitely supported ``l != 0``; here this is checked on a finite
box of ``l``.

The combinatorial checks work with the decreasing list ``n_hat`` of site
magnitudes of ``alpha + beta`` and the signed list ``m`` of the sites of
``alpha - beta`` (see :mod:`gevrey_bnf.indices`).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import indices as ix
from .errors import KernelInputError, ResonanceError, ValidationError
from .formal_hamiltonian import FormalHamiltonian, Frequency, format_key, momentum_keys


def c_star(theta: float) -> float:
    """``7 / (2 - 2**theta)``."""
    _check_theta(theta)
    return 7.0 / (2.0 - 2.0**theta)


def _check_theta(theta):
    if not 0 < theta < 1:
        raise ValidationError("theta must lie in (0, 1)")


@dataclass(frozen=True)
class DivisorParams:
    gamma: float = 1e-3
    sigma: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if not 0 < self.sigma <= 1:
            raise ValidationError("sigma must lie in (0, 1]")
        _check_theta(self.theta)

    @property
    def c_star(self) -> float:
        return c_star(self.theta)

    @property
    def loss_constant(self) -> float:
        """``theta sigma (2 - 2**theta) / 84``."""
        return self.theta * self.sigma * (2 - 2**self.theta) / 84


def divisor_weight(ell, gamma: float) -> float:
    """``gamma prod_n (1 + l_n^2 <n>^2)^-1`` for a signed index ``ell``.

    Raises
    ------
    ValidationError
        For the zero vector.
    """
    ell = ix.signed_index(ell)
    if not ell:
        raise ValidationError("divisor weight of the zero vector")
    w = float(gamma)
    for n, v in ell:
        w /= 1 + v * v * ix.jap(n) ** 2
    return w


def sample_frequency(seed: int, gamma: float = 1e-3, denominator: int | None = None) -> Frequency:
    """Frequency with ``xi_j`` drawn lazily from ``(seed, j)``."""
    return Frequency(gamma=gamma, seed=int(seed), denominator=denominator)


# enumeration of l

def _vectors(n_sites: int, norm_cap: int):
    """Nonzero integer vectors of l1 norm at most ``norm_cap``, one of each pair ``+-l``.

    Ordered by norm, then lexicographically.
    """
    out = []
    for norm in range(1, norm_cap + 1):
        batch = []
        for k in range(1, min(norm, n_sites) + 1):
            for supp in itertools.combinations(range(n_sites), k):
                for mags in _compositions(norm, k):
                    # first entry positive picks one of +-l
                    for signs in itertools.product((1, -1), repeat=k - 1):
                        v = [0] * n_sites
                        v[supp[0]] = mags[0]
                        for p, m, sg in zip(supp[1:], mags[1:], signs):
                            v[p] = sg * m
                        batch.append(tuple(v))
        batch.sort(reverse=True)
        out.extend(batch)
    return out


def _compositions(n, k):
    if k == 1:
        yield (n,)
        return
    for first in range(1, n - k + 2):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


@lru_cache(maxsize=16)
def _ell_table(norm_cap: int, site_cap: int):
    sites = np.arange(-site_cap, site_cap + 1)
    L = np.array(_vectors(len(sites), norm_cap), dtype=np.int64).reshape(-1, len(sites))
    jap2 = np.maximum(np.abs(sites), 1).astype(float) ** 2
    log_w = -np.sum(np.log1p(L.astype(float) ** 2 * jap2), axis=1)
    L.setflags(write=False)
    log_w.setflags(write=False)
    return sites, L, log_w


def is_diophantine_up_to(freq: Frequency, gamma: float, ell_norm_cap: int, site_cap: int):
    """Check the Diophantine inequality on ``|l|_1 <= ell_norm_cap``, ``supp l`` in ``[-site_cap, site_cap]``.

    Returns
    -------
    (bool, (l, ratio))
        Whether every ratio ``|omega . l| / divisor_weight(l)`` exceeds 1,
        and the smallest one with its witness.
    """
    sites, L, log_w = _ell_table(int(ell_norm_cap), int(site_cap))
    om = np.array([float(freq.omega(int(j))) for j in sites])
    dots = np.abs(L @ om)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(dots) - math.log(gamma) - log_w
    k = int(np.argmin(log_ratio))
    ell = tuple((int(sites[p]), int(L[k, p])) for p in range(len(sites)) if L[k, p])
    ratio = float(np.exp(log_ratio[k])) if np.isfinite(log_ratio[k]) else 0.0
    return bool(log_ratio[k] > 0), (ell, ratio)


@dataclass
class MeasureEstimate:
    gamma: float
    fraction: float
    failures: int
    n_samples: int
    low: float
    high: float

    def as_dict(self):
        return dict(gamma=self.gamma, fraction=self.fraction, failures=self.failures,
                    n_samples=self.n_samples, low=self.low, high=self.high)


def _sample_seed(seed, k):
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def measure_estimate(gamma: float, caps, n_samples: int, seed: int = 0, z: float = 1.96) -> MeasureEstimate:
    """Monte Carlo fraction of frequencies failing :func:`is_diophantine_up_to`.

    Sample ``k`` uses seed ``(seed, k)``, so different ``gamma`` share
    the same frequencies. The interval is the normal approximation at
    ``z`` standard errors, clipped to ``[0, 1]``.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    ell_cap, site_cap = caps
    fails = 0
    for k in range(n_samples):
        ok, _ = is_diophantine_up_to(sample_frequency(_sample_seed(seed, k)), gamma, ell_cap, site_cap)
        fails += not ok
    p = fails / n_samples
    half = z * math.sqrt(p * (1 - p) / n_samples)
    return MeasureEstimate(gamma, p, fails, n_samples, max(0.0, p - half), min(1.0, p + half))


# rearrangement inequalities

@dataclass
class CheckStats:
    checked: int = 0
    violations: list = dc_field(default_factory=list)
    min_slack: float = math.inf
    equalities: int = 0

    def add(self, key, lhs, rhs, tol=1e-12):
        self.checked += 1
        slack = rhs - lhs
        self.min_slack = min(self.min_slack, slack)
        if abs(slack) <= tol * max(1.0, abs(rhs)):
            self.equalities += 1
        elif slack < 0:
            self.violations.append((key, lhs, rhs))


@dataclass
class LemmaReport:
    theta: float
    c_star: float
    window: tuple
    max_total_degree: int
    n_keys: int = 0
    checks: dict = dc_field(default_factory=dict)

    @property
    def n_violations(self) -> int:
        return sum(len(c.violations) for c in self.checks.values())

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def format(self) -> str:
        lines = [f"theta={self.theta} C_*={self.c_star:.6g} keys={self.n_keys}"]
        w = max(len(n) for n in self.checks) if self.checks else 0
        for name, c in self.checks.items():
            lines.append(f"{name:{w}s}  checked={c.checked:7d}  violations={len(c.violations):4d}  "
                         f"equalities={c.equalities:6d}  min_slack={c.min_slack:.6g}")
        for name, c in self.checks.items():
            for key, lhs, rhs in c.violations[:5]:
                lines.append(f"  {name} violated at {format_key(key)}: {lhs:.12g} > {rhs:.12g}")
        return "\n".join(lines) + "\n"


def divisor_condition(alpha, beta) -> bool:
    """``|sum (alpha_i - beta_i) i^2| <= 2 sum |alpha_i - beta_i|``."""
    u = ix.difference(alpha, beta)
    return abs(sum(v * i * i for i, v in u)) <= 2 * sum(abs(v) for _, v in u)


def far_divisor_lower_bound(alpha, beta) -> Fraction:
    """Worst case of ``|omega . (alpha - beta)|`` over all ``|xi_j| <= 1/2``, by the triangle inequality."""
    u = ix.difference(alpha, beta)
    return Fraction(abs(sum(v * i * i for i, v in u))) - Fraction(sum(abs(v) for _, v in u), 2)


def _check_key(alpha, beta, theta, cst, checks, key):
    v = ix.add(alpha, beta)
    nh = ix.n_hat(v)
    N = len(nh)
    u = ix.difference(alpha, beta)
    m, D = ix.signed_list(u)
    nt = [x**theta for x in nh]
    tail_t = sum(nt[2:])
    # sum <i>^theta v_i >= 2 n_1^theta + (2 - 2^theta) sum_{l>=3} n_l^theta
    lhs = sum(nt)
    checks["gevrey-split"].add(key, 2 * nt[0] + (2 - 2**theta) * tail_t, lhs)
    for j, _ in v:
        checks["smoothing-gap"].add(key, (2 - 2**theta) * tail_t, lhs - 2 * ix.jap(j) ** theta)
    if alpha == beta:
        return
    g = lambda i: ix.jap(i) ** (theta / 2)  # noqa: E731
    a0, b0 = ix.get(alpha, 0), ix.get(beta, 0)
    if D >= 1:
        lhs_p = sum(g(i) * abs(e) for i, e in u)
        checks["site-sum"].add(key, lhs_p, 2 * g(m[0]) + sum(g(x) for x in nh[2:]))
    div = divisor_condition(alpha, beta)
    if not div:
        checks["far-divisor"].add(key, 1, float(far_divisor_lower_bound(alpha, beta)))
    if N >= 3:
        checks["count"].add(key, D + a0 + b0, N)
        prof = sorted([abs(x) for x in m] + [1] * (N - D), reverse=True)
        checks["domination"].add(key, max(p - q for p, q in zip(prof, nh)), 0)
        if div:
            if D >= 1:
                checks["leading-site"].add(key, abs(m[0]), 7 * sum(x * x for x in nh[2:]))
            lhs_a = sum(abs(e) * ix.jap(i) ** (theta / 2) for i, e in u)
            for j, _ in v:
                checks["divisor-loss"].add(key, lhs_a, cst * (lhs - 2 * ix.jap(j) ** theta))


def verify_rearrangement_lemmas(window=(-5, 5), max_total_degree: int = 6, theta: float = 0.5) -> LemmaReport:
    """Exhaustive check of the rearrangement inequalities on a site window.

    Enumerates every momentum-zero ``(alpha, beta)``, both orientations, with
    support in ``window`` and ``2 <= |alpha| + |beta| <= max_total_degree``.

    Checks and their hypotheses:

    ``gevrey-split``, ``smoothing-gap``
        all keys.
    ``site-sum`` (with ``g(i) = <i>^(theta/2)``)
        ``alpha != beta`` and ``alpha - beta`` not supported on site 0 only.
    ``far-divisor``
        ``alpha != beta`` and the divisor condition fails; then
        ``|omega . (alpha - beta)| >= 1`` for every admissible ``omega``.
    ``count``, ``domination``
        ``alpha != beta``, ``N >= 3``.
    ``leading-site``
        ``alpha != beta``, ``N >= 3``, ``D >= 1`` and the divisor condition.
    ``divisor-loss`` (with ``C_* = 7 / (2 - 2**theta)``, every ``j`` in the support)
        ``alpha != beta``, ``N >= 3`` and the divisor condition.
    """
    _check_theta(theta)
    cst = c_star(theta)
    names = ["gevrey-split", "smoothing-gap", "site-sum", "far-divisor", "count", "domination", "leading-site", "divisor-loss"]
    report = LemmaReport(theta, cst, tuple(window), max_total_degree, checks={n: CheckStats() for n in names})
    sites = ix_window(window)
    for key in momentum_keys(sites, 0, max_total_degree - 2):
        a, b = key
        report.n_keys += 1
        _check_key(a, b, theta, cst, report.checks, (a, b))
        if a != b:
            report.n_keys += 1
            _check_key(b, a, theta, cst, report.checks, (b, a))
    return report


def ix_window(window):
    if isinstance(window, tuple) and len(window) == 2:
        return list(range(window[0], window[1] + 1))
    return list(window)


# divisor exponent bound

def i_sharp(sigma: float, theta: float) -> float:
    """``((24 C_* / (sigma theta)) ln(12 C_* / (sigma theta)))**(2/theta)``."""
    _exponent_domain(sigma, theta)
    c = c_star(theta)
    x = 24 * c / (sigma * theta)
    return (x * math.log(12 * c / (sigma * theta))) ** (2 / theta)


def _exponent_domain(sigma, theta):
    if not 0 < sigma <= 1:
        raise ValidationError("sigma must lie in (0, 1]")
    _check_theta(theta)


def exponent_bound(sigma: float, theta: float):
    """``(i_sharp, 18 i_sharp ln i_sharp)``.

    The second entry bounds ``sum_i f_i(|l_i|)`` for every ``l``, with
    ``f_i(x) = -(sigma / C_*) x <i>^(theta/2) + ln(1 + x^2 <i>^2)``.
    """
    s = i_sharp(sigma, theta)
    return s, 18 * s * math.log(s)


def f_term(i: int, x, sigma: float, theta: float) -> float:
    """``f_i(x)``."""
    jj = ix.jap(i)
    return -(sigma / c_star(theta)) * x * jj ** (theta / 2) + math.log1p(x * x * jj * jj)


def exponent_sum(ell, sigma: float, theta: float) -> float:
    """``sum_i f_i(|l_i|)``."""
    return sum(f_term(i, abs(v), sigma, theta) for i, v in ix.signed_index(ell))


def c1_surrogate(theta: float, sigma_max: float = 1.0, n_grid: int = 400) -> float:
    """``sup`` over ``sigma`` in ``(0, sigma_max]`` of ``18 i_sharp ln i_sharp sigma^(3/theta)``.

    This is the constant ``C_1`` for which ``exp(C_1 sigma^(-3/theta))``
    dominates the explicit bound at every loss up to ``sigma_max``. The sup
    is taken on a log grid from ``1e-8 sigma_max``; the function tends to 0
    as ``sigma -> 0``.
    """
    _check_theta(theta)
    sigma_max = min(1.0, sigma_max)
    grid = np.geomspace(1e-8 * sigma_max, sigma_max, n_grid)
    vals = [exponent_bound(float(s), theta)[1] * float(s) ** (3 / theta) for s in grid]
    return float(max(vals))


@dataclass
class KeyBound:
    key: tuple
    log_K: float
    branch: str
    chain_ok: bool
    note: str = ""


@dataclass
class HomologicalReport:
    sigma: float
    theta: float
    gamma: float
    log_bound: float
    keys: list = dc_field(default_factory=list)

    @property
    def max_log_K(self) -> float:
        return max((k.log_K for k in self.keys), default=-math.inf)

    @property
    def margin(self) -> float:
        """``log_bound - max log K``, non-negative on success."""
        return self.log_bound - self.max_log_K

    @property
    def passed(self) -> bool:
        return self.margin >= 0

    @property
    def chain_breaks(self) -> list:
        return [k for k in self.keys if not k.chain_ok]


def homological_log_K(freq: Frequency, key, gamma: float, sigma: float, theta: float) -> float:
    """``log`` of ``gamma exp(-sigma (sum <i>^theta v_i - 2 <j>^theta)) / |omega . (alpha - beta)|`` maximized over ``j``."""
    a, b = key
    v = ix.add(a, b)
    u = ix.difference(a, b)
    w = abs(float(freq.dot(u)))
    if w == 0:
        raise ResonanceError(format_key(key), 0.0)
    spread = sum(e * ix.jap(i) ** theta for i, e in v) - 2 * max(ix.jap(j) for j, _ in v) ** theta
    return math.log(gamma) - sigma * spread - math.log(w)


def verify_homological_bound(freq: Frequency, R: FormalHamiltonian, gamma: float, sigma: float,
                             theta: float = 0.5) -> HomologicalReport:
    """Per-key check of the homological constant against ``exp(18 i_sharp ln i_sharp)``.

    For every key of ``R`` the quantity ``K`` of :func:`homological_log_K`
    is compared with the bound. The intermediate steps are also checked:
    if the divisor condition fails, ``K <= gamma``; otherwise
    ``K <= exp(-sigma spread) prod (1 + u_i^2 <i>^2)`` (Diophantine at
    ``l = u``), then ``sigma spread >= (sigma / C_*) sum |u_i| <i>^(theta/2)``
    and ``sum f_i(|u_i|) <= 18 i_sharp ln i_sharp``. A broken intermediate
    step is recorded on the key; only the final comparison decides
    ``passed``.

    Raises
    ------
    KernelInputError
        If ``R`` has a key with ``alpha == beta``.
    ResonanceError
        If a divisor vanishes.
    """
    _, log_bound = exponent_bound(sigma, theta)
    cst = c_star(theta)
    report = HomologicalReport(sigma, theta, gamma, log_bound)
    for key in sorted(R.terms):
        a, b = key
        if a == b:
            raise KernelInputError(format_key(key))
        lk = homological_log_K(freq, key, gamma, sigma, theta)
        u = ix.difference(a, b)
        v = ix.add(a, b)
        notes = []
        if not divisor_condition(a, b):
            branch = "far"
            ok = lk <= math.log(gamma) + 1e-12
            if not ok:
                notes.append("K > gamma")
        else:
            D = ix.signed_list(u)[1]
            branch = "D=0" if D == 0 else "near"
            spread = sum(e * ix.jap(i) ** theta for i, e in v) - 2 * max(ix.jap(j) for j, _ in v) ** theta
            log_prod = sum(math.log1p(e * e * ix.jap(i) ** 2) for i, e in u)
            ok = True
            if lk > -sigma * spread + log_prod + 1e-12:
                ok = False
                notes.append("not Diophantine at this l")
            lhs_a = sum(abs(e) * ix.jap(i) ** (theta / 2) for i, e in u)
            if ix.total(v) >= 3 and lhs_a > cst * spread * (1 + 1e-12):
                ok = False
                notes.append("rearrangement bound")
            if exponent_sum(u, sigma, theta) > log_bound:
                ok = False
                notes.append("sum f_i above bound")
        report.keys.append(KeyBound(key, lk, branch, ok, "; ".join(notes)))
    return report


# frequency files

def write_frequency(freq: Frequency, path, sites=()) -> None:
    """Write the header and ``site xi`` lines for ``overrides`` plus ``sites``."""
    lines = [f"gamma {freq.gamma!r}"]
    if freq.seed is not None:
        lines.append(f"seed {freq.seed}")
    if freq.denominator:
        lines.append(f"denominator {freq.denominator}")
    for j in sorted(set(freq.overrides) | set(sites)):
        x = freq.xi(j)
        lines.append(f"{j} {x}" if isinstance(x, Fraction) else f"{j} {float(x)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def loads_frequency(text: str) -> Frequency:
    """Parse a frequency file.

    Header lines ``gamma X``, optional ``seed N`` and ``denominator D``;
    then ``site xi`` lines. Values with ``/`` or integers are exact.
    """
    from .errors import ParseError

    gamma, seed, den, over = None, None, None, {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected two fields, got {len(parts)}", n)
        k, val = parts
        try:
            if k == "gamma":
                gamma = float(val)
            elif k == "seed":
                seed = int(val)
            elif k == "denominator":
                den = int(val)
            else:
                j = int(k)
                x = Fraction(val) if ("/" in val or val.lstrip("-").isdigit()) else float(val)
                if j in over:
                    raise ParseError(f"site {j} given twice", n)
                if abs(x) > 0.5:
                    raise ParseError(f"|xi_{j}| > 1/2", n)
                over[j] = x
        except ValueError as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(str(e), n) from None
    if gamma is None:
        raise ParseError("missing gamma header", 1)
    if gamma <= 0:
        raise ParseError("gamma must be positive", 1)
    return Frequency(gamma=gamma, seed=seed, overrides=over, denominator=den)


def read_frequency(path) -> Frequency:
    with open(path) as fh:
        return loads_frequency(fh.read())
