"""Majorant norms on Gevrey sequence spaces.

For ``H = sum H_{alpha,beta} u^alpha ubar^beta`` and parameters
``(r, s, p, theta)`` the norm is the supremum over the non-negative unit
sphere of the Euclidean length of the majorant field

    Y_j(y) = sum |H_{alpha,beta}| (v_j / 2) c_j(alpha, beta) y^(v - e_j),
    c_j = r^(|v|-2) (<j>^2 / prod <i>^v_i)^p exp(-s (sum <i>^theta v_i - 2 <j>^theta)),

with ``v = alpha + beta`` and the sum over both orientations of every key.
The exact supremum is a polynomial optimization problem, so only bounds are
exposed: :func:`norm_upper` (sum of single-monomial norms) and
:func:`norm_lower` (largest sampled value). One-monomial norms are computed
by Baum-Eagon ascent on the simplex ``t = y^2``.

The radius ``r`` may be an ``mpmath.mpf``; then all norm values are
returned as ``mpf`` so tiny radii do not underflow. Coefficients and the
other parameters stay ordinary floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from functools import lru_cache

import mpmath
import numpy as np

from .formal_hamiltonian import FormalHamiltonian, key_degree
from .indices import jap
from .errors import ValidationError

REL_TOL = 1e-9


@dataclass(frozen=True)
class GevreyParams:
    """Norm parameters.

    Attributes
    ----------
    r
        Ball radius, ``float`` or ``mpmath.mpf``.
    s
        Gevrey width, ``s >= 0``.
    p
        Sobolev exponent, ``p >= 1/2``.
    theta
        Gevrey exponent in ``(0, 1)``.
    """

    r: object = 1.0
    s: float = 0.0
    p: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError("r must be positive")
        if self.s < 0:
            raise ValidationError("s must be non-negative")
        if self.p < 0.5:
            raise ValidationError("p must be at least 1/2")
        if not 0 < self.theta < 1:
            raise ValidationError("theta must lie in (0, 1)")

    def with_r(self, r):
        return replace(self, r=r)

    def with_s(self, s):
        return replace(self, s=s)


def _is_mp(x) -> bool:
    return hasattr(x, "_mpf_")


def _pow(r, d):
    if _is_mp(r):
        return mpmath.power(r, d)
    return float(r) ** d


def _v_of(key):
    d = dict(key[0])
    for s, e in key[1]:
        d[s] = d.get(s, 0) + e
    return tuple(sorted(d.items()))


def _log_weight_unit(j, v, p, s, theta):
    """``log c_j`` at ``r = 1``."""
    vd = dict(v)
    if vd.get(j, 0) == 0:
        raise ValidationError(f"site {j} is not in the support")
    logprod = sum(e * math.log(jap(i)) for i, e in v)
    gev = sum(e * jap(i) ** theta for i, e in v) - 2 * jap(j) ** theta
    return p * (2 * math.log(jap(j)) - logprod) - s * gev


def weight(j: int, alpha, beta, params: GevreyParams):
    """The coefficient ``c_j(alpha, beta)`` at ``params``.

    Raises
    ------
    ValidationError
        If ``alpha_j + beta_j = 0``.
    """
    v = _v_of((alpha, beta))
    n = sum(e for _, e in v)
    lw = _log_weight_unit(j, v, params.p, params.s, params.theta)
    if _is_mp(params.r):
        return mpmath.power(params.r, n - 2) * mpmath.exp(lw)
    return float(params.r) ** (n - 2) * math.exp(lw)


def _multiplicity(key) -> int:
    return 1 if key[0] == key[1] else 2


def majorant_field(H: FormalHamiltonian, y: dict, params: GevreyParams) -> dict:
    """Evaluate ``Y_j(y)`` for every site ``j`` in the support of ``H``.

    ``y`` maps sites to non-negative values; missing sites are zero.
    """
    out: dict = {}
    f = H.field
    for key, c in H.terms.items():
        v = _v_of(key)
        d = key_degree(key)
        m = _multiplicity(key) * float(f.modulus(c)) * _pow(params.r, d)
        for j, vj in v:
            lw = _log_weight_unit(j, v, params.p, params.s, params.theta)
            mono = 1.0
            for i, e in v:
                k = e - (1 if i == j else 0)
                if k:
                    mono *= float(y.get(i, 0.0)) ** k
            out[j] = out.get(j, 0.0) + m * (vj / 2) * math.exp(lw) * mono
    return out


# one-monomial norms


def _shape_problem(v, p, s, theta):
    sites = [i for i, _ in v]
    n = len(sites)
    vv = np.array([e for _, e in v], dtype=float)
    E = np.tile(vv, (n, 1)) - np.eye(n)
    logc = np.array([_log_weight_unit(j, v, p, s, theta) for j in sites])
    # a_j = (v_j c_j / 2)^2, kept in logs
    loga = 2 * (np.log(vv / 2) + logc)
    return sites, E, loga


def _log_f(t, E, loga):
    with np.errstate(divide="ignore"):
        lt = np.where(t > 0, np.log(np.where(t > 0, t, 1.0)), -np.inf)
    terms = loga + _safe_dot(E, lt)
    top = np.max(terms)
    if not np.isfinite(top):
        return -np.inf
    return top + math.log(np.sum(np.exp(terms - top)))


def _safe_dot(E, lt):
    # 0 * log 0 counts as 0
    out = np.zeros(E.shape[0])
    for k in range(E.shape[0]):
        mask = E[k] != 0
        out[k] = np.sum(E[k][mask] * lt[mask])
    return out


def _ascent(t, E, loga, tol=1e-12, max_iter=100_000):
    prev = _log_f(t, E, loga)
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            lt = np.where(t > 0, np.log(np.where(t > 0, t, 1.0)), -np.inf)
        terms = loga + _safe_dot(E, lt)
        top = np.max(terms)
        w = np.exp(terms - top)
        g = w @ E
        tot = g.sum()
        if tot <= 0:
            break
        t = g / tot
        cur = _log_f(t, E, loga)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            prev = max(prev, cur)
            break
        prev = cur
    return prev, t


@lru_cache(maxsize=200_000)
def _shape(v, p, s, theta):
    """``(log sup_t f, argmax t)`` for exponent profile ``v``."""
    sites, E, loga = _shape_problem(v, p, s, theta)
    n = len(sites)
    if n == 1:
        return float(loga[0]), (1.0,)
    starts = [np.full(n, 1.0 / n)]
    for k in range(n):
        row = E[k]
        starts.append(row / row.sum())
    vv = E[0] + np.eye(n)[0]
    starts.append(vv / vv.sum())
    best, arg = -np.inf, None
    for t0 in starts:
        val, t = _ascent(t0.copy(), E, loga)
        if val > best:
            best, arg = val, t
    return float(best), tuple(float(x) for x in arg)


def shape_norm(v, p, s, theta) -> float:
    """Norm of the unit-coefficient monomial with profile ``v`` at ``r = 1``, one orientation."""
    return math.exp(0.5 * _shape(tuple(v), float(p), float(s), float(theta))[0])


def shape_maximizer(v, p, s, theta) -> dict:
    """Sites of ``v`` mapped to the maximizing ``y``."""
    _, t = _shape(tuple(v), float(p), float(s), float(theta))
    return {i: math.sqrt(x) for (i, _), x in zip(v, t)}


def monomial_norm(key, coefficient, params: GevreyParams, field=None):
    """Norm of the real Hamiltonian carried by one canonical key.

    Counts both orientations of a non-self-conjugate key. ``coefficient``
    may be a field element (give ``field``) or a number.
    """
    mod = float(field.modulus(coefficient)) if field is not None else abs(complex(coefficient))
    if mod == 0:
        return 0.0 if not _is_mp(params.r) else mpmath.mpf(0)
    v = _v_of(key)
    val = _multiplicity(key) * mod * shape_norm(v, params.p, params.s, params.theta)
    return _pow(params.r, key_degree(key)) * val


def _by_degree_upper(H, params):
    acc: dict = {}
    f = H.field
    for key, c in H.terms.items():
        v = _v_of(key)
        d = key_degree(key)
        acc[d] = acc.get(d, 0.0) + _multiplicity(key) * float(f.modulus(c)) * shape_norm(
            v, params.p, params.s, params.theta
        )
    return acc


def norm_upper(H: FormalHamiltonian, params: GevreyParams):
    """Sum of the one-monomial norms, an upper bound of the norm."""
    acc = _by_degree_upper(H, params)
    if _is_mp(params.r):
        return mpmath.fsum(mpmath.power(params.r, d) * u for d, u in acc.items()) if acc else mpmath.mpf(0)
    return float(sum(float(params.r) ** d * u for d, u in sorted(acc.items())))


def log_norm_upper(H: FormalHamiltonian, params: GevreyParams) -> float:
    """``log(norm_upper)`` as a float, ``-inf`` for zero."""
    v = norm_upper(H, params)
    if _is_mp(v):
        return float(mpmath.log(v)) if v > 0 else -math.inf
    return math.log(v) if v > 0 else -math.inf


def _field_data(H, params):
    """Per degree: (sites, rows of exponents, per-site weights at r = 1)."""
    f = H.field
    sites = sorted(H.sites())
    pos = {s: k for k, s in enumerate(sites)}
    n = len(sites)
    groups: dict = {}
    for key, c in H.terms.items():
        v = _v_of(key)
        d = key_degree(key)
        m = _multiplicity(key) * float(f.modulus(c))
        row = np.zeros(n)
        w = np.zeros(n)
        for i, e in v:
            row[pos[i]] = e
            w[pos[i]] = m * (e / 2) * math.exp(_log_weight_unit(i, v, params.p, params.s, params.theta))
        groups.setdefault(d, ([], []))
        groups[d][0].append(row)
        groups[d][1].append(w)
    return sites, {d: (np.array(r), np.array(w)) for d, (r, w) in groups.items()}


def _field_values(ly, V, W):
    """``Y`` at unit radius for the samples with log-coordinates ``ly``."""
    out = np.zeros((ly.shape[0], V.shape[1]))
    for j in range(V.shape[1]):
        rows = V[:, j] > 0
        if not rows.any():
            continue
        Ej = V[rows].copy()
        Ej[:, j] -= 1
        expo = ly @ Ej.T
        out[:, j] = np.exp(expo) @ W[rows, j]
    return out


def norm_lower(H: FormalHamiltonian, params: GevreyParams, samples: int = 1000, seed: int = 0,
               include_maximizers: bool = True):
    """Largest ``|Y_H(y)|`` over sampled unit vectors ``y >= 0``.

    Samples are ``|g| / ||g||`` for standard Gaussian ``g`` on the support of
    ``H``; the one-monomial maximizers are added when
    ``include_maximizers`` is set. Deterministic under ``seed``.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    mp = _is_mp(params.r)
    if H.is_zero():
        return mpmath.mpf(0) if mp else 0.0
    sites, groups = _field_data(H, params)
    n = len(sites)
    rng = np.random.default_rng(seed)
    Y = np.abs(rng.standard_normal((samples, n)))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    pts = [Y]
    if include_maximizers:
        pos = {s: k for k, s in enumerate(sites)}
        cand = []
        for key in H.terms:
            y = np.zeros(n)
            for i, x in shape_maximizer(_v_of(key), params.p, params.s, params.theta).items():
                y[pos[i]] = x
            nrm = np.linalg.norm(y)
            if nrm > 0:
                cand.append(y / nrm)
        if cand:
            pts.append(np.array(cand))
    Y = np.vstack(pts)
    with np.errstate(divide="ignore"):
        ly = np.where(Y > 0, np.log(np.where(Y > 0, Y, 1.0)), -1e300)
    per_degree = {d: _field_values(ly, V, W) for d, (V, W) in groups.items()}
    if mp:
        best = mpmath.mpf(0)
        for d, vals in per_degree.items():
            lo = float(np.max(np.linalg.norm(vals, axis=1)))
            best = max(best, mpmath.power(params.r, d) * lo)
        return best
    r = float(params.r)
    total = sum(r**d * vals for d, vals in per_degree.items())
    return float(np.max(np.linalg.norm(total, axis=1)))


def diagonal_bounds(H: FormalHamiltonian):
    """``(max_j |H_jj|, sum_j |H_jj|)`` for a diagonal quadratic ``H``."""
    f = H.field
    mods = [float(f.modulus(c)) for k, c in H.terms.items() if key_degree(k) == 0 and k[0] == k[1]]
    return (max(mods, default=0.0), sum(mods))


# lemma checks

@dataclass
class InequalityCheck:
    """One ``lhs <= rhs`` check with a lower bound on the left and an upper bound on the right."""

    name: str
    lhs: object
    rhs: object
    passed: bool
    unbounded: bool = False

    @property
    def margin(self):
        if self.unbounded:
            return math.inf
        return float(self.rhs - self.lhs)


@dataclass
class NormReport:
    checks: list = dc_field(default_factory=list)
    generator_scale: float = 1.0
    delta: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            extra = " (unbounded constant)" if c.unbounded else ""
            lines.append(f"{c.name:12s} lhs={_num(c.lhs)} rhs={_num(c.rhs)} {status}{extra}")
        return "\n".join(lines) + "\n"


def _num(x):
    if _is_mp(x):
        return mpmath.nstr(x, 8)
    return f"{float(x):.8g}"


def _leq(lhs, rhs):
    return lhs <= rhs * (1 + REL_TOL) + (0 if rhs else 0)


def _rational_below(x: float):
    from fractions import Fraction

    q = Fraction(x).limit_denominator(10**12)
    while q > x:
        q -= Fraction(1, 10**12)
    return q


def verify_norm_inequalities(F: FormalHamiltonian, G: FormalHamiltonian, params: GevreyParams, rho,
                             samples: int = 500, seed: int = 0, orders=(1, 2, 3)) -> NormReport:
    """Check the bracket and flow estimates on truncated instances.

    The left sides use :func:`norm_lower` at radius ``r`` and the right
    sides :func:`norm_upper` at ``r + rho``, so a passing check is a true
    statement about the exact norms. For the flow estimates ``F`` plays the
    generator and ``G`` the Hamiltonian; if the generator is larger than
    ``delta = rho / (8 e (r + rho))`` it is scaled down to meet the
    hypothesis and the factor is reported.
    """
    from .lie_algebra import lie_series, lie_transform, poisson

    report = NormReport()
    r = params.r
    if not rho > 0 or (not _is_mp(rho) and float(rho) < 1e-300):
        report.checks.append(InequalityCheck("bracket", 0.0, math.inf, True, unbounded=True))
        return report
    big = params.with_r(r + rho)
    nF, nG = norm_upper(F, big), norm_upper(G, big)
    lhs = norm_lower(poisson(F, G), params, samples, seed)
    rhs = 4 * (1 + r / rho) * nF * nG
    report.checks.append(InequalityCheck("bracket", lhs, rhs, bool(_leq(lhs, rhs))))

    delta = rho / (8 * math.e * (r + rho))
    report.delta = float(delta)
    S = F
    nS = nF
    if nS > delta:
        factor = delta / nS
        q = _rational_below(float(factor)) if S.field.exact else float(factor)
        S = S.scale(q)
        report.generator_scale = float(q)
        nS = norm_upper(S, big)
    if S.is_zero() or G.is_zero() or S.min_degree < 1:
        # the flow estimates need a generator of degree >= 1
        return report
    from fractions import Fraction

    def inv_fact(k):
        return Fraction(1, math.factorial(k))

    flows = [
        ("flow", lie_transform(S, G), 2 * nG),
        ("flow-id", lie_series(S, G, inv_fact, start=1), nS * nG / delta),
        ("flow-id-ad", lie_series(S, G, inv_fact, start=2), nS**2 * nG / (2 * delta**2)),
    ]
    for h in orders:
        flows.append((f"tail[{h}]", lie_series(S, G, inv_fact, start=h), 2 * nG * (nS / (2 * delta)) ** h))
    for name, X, bound in flows:
        lhs = norm_lower(X, params, samples, seed)
        report.checks.append(InequalityCheck(name, lhs, bound, bool(_leq(lhs, bound))))
    return report
