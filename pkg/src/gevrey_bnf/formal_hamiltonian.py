"""Sparse momentum-conserving formal power series.

A Hamiltonian ``H = sum H_{alpha,beta} u^alpha conj(u)^beta`` is stored on
canonical keys only: the key ``(alpha, beta)`` with ``alpha <= beta`` (as
tuples) carries its coefficient, the swapped key carries the conjugate.
This makes the reality condition hold by construction.

Every stored key has zero momentum, ``|alpha|+|beta| >= 2`` and scaling
degree ``|alpha|+|beta|-2`` at most ``degree_cap``. Coefficients above the
cap are unknown, not zero; operations combine caps accordingly.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np

from . import indices as ix
from .errors import (
    DegreeOverflow,
    ForbiddenTerm,
    MomentumViolation,
    ParseError,
    RealityConflict,
    ValidationError,
)
from .scalars import F64, RATIONAL, RationalField, field_from_label

Key = tuple  # (alpha, beta)


def canonical(alpha, beta):
    """Canonical orientation of a key and whether it was swapped."""
    if alpha <= beta:
        return (alpha, beta), False
    return (beta, alpha), True


_DEGREE_CACHE: dict = {}


def key_degree(key) -> int:
    """Scaling degree ``|alpha| + |beta| - 2`` of a key."""
    d = _DEGREE_CACHE.get(key)
    if d is None:
        a, b = key
        d = sum(e for _, e in a) + sum(e for _, e in b) - 2
        if len(_DEGREE_CACHE) < 4_000_000:
            _DEGREE_CACHE[key] = d
    return d


def format_key(key) -> str:
    return f"alpha{ix.format_index(key[0])} beta{ix.format_index(key[1])}"


def validate_key(alpha, beta, degree_cap=None):
    """Check that ``(alpha, beta)`` may carry a coefficient.

    Raises
    ------
    MomentumViolation, ForbiddenTerm, DegreeOverflow
    """
    n = ix.total(alpha) + ix.total(beta)
    if n < 2:
        raise ForbiddenTerm(f"constant or linear term {format_key((alpha, beta))}")
    p = ix.momentum(alpha, beta)
    if p != 0:
        raise MomentumViolation(f"momentum {p} != 0 for {format_key((alpha, beta))}")
    if degree_cap is not None and n - 2 > degree_cap:
        raise DegreeOverflow(f"degree {n - 2} above cap {degree_cap} for {format_key((alpha, beta))}")


class FormalHamiltonian:
    """Immutable sparse Hamiltonian on canonical keys.

    Parameters
    ----------
    terms
        Mapping canonical key -> nonzero coefficient of ``field``.
    field
        Scalar field of the coefficients.
    degree_cap
        Largest scaling degree represented.

    Notes
    -----
    Use :func:`build` for validated construction from user data; the
    constructor trusts its input.
    """

    __slots__ = ("terms", "field", "degree_cap", "_min_degree", "_max_degree")

    def __init__(self, terms: dict, field=RATIONAL, degree_cap: int = 0):
        self.terms = terms
        self.field = field
        self.degree_cap = degree_cap
        self._min_degree = None
        self._max_degree = None

    # basic queries

    @property
    def min_degree(self):
        """Smallest scaling degree present, ``math.inf`` for zero."""
        if self._min_degree is None:
            self._min_degree = min((key_degree(k) for k in self.terms), default=math.inf)
        return self._min_degree

    @property
    def max_degree(self):
        if self._max_degree is None:
            self._max_degree = max((key_degree(k) for k in self.terms), default=-math.inf)
        return self._max_degree

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, alpha, beta):
        if not isinstance(alpha, tuple):
            alpha = ix.multi_index(alpha)
        if not isinstance(beta, tuple):
            beta = ix.multi_index(beta)
        key, swapped = canonical(alpha, beta)
        c = self.terms.get(key)
        if c is None:
            return self.field.zero
        return self.field.conj(c) if swapped else c

    def items_full(self) -> Iterator[tuple]:
        """All ``(alpha, beta, coefficient)`` in both orientations."""
        conj = self.field.conj
        for (a, b), c in self.terms.items():
            yield a, b, c
            if a != b:
                yield b, a, conj(c)

    def full_terms(self) -> dict:
        return {(a, b): c for a, b, c in self.items_full()}

    def degrees(self) -> list[int]:
        return sorted({key_degree(k) for k in self.terms})

    def max_abs(self) -> float:
        mod = self.field.modulus
        return max((float(mod(c)) for c in self.terms.values()), default=0.0)

    def sites(self) -> set[int]:
        out = set()
        for a, b in self.terms:
            out.update(s for s, _ in a)
            out.update(s for s, _ in b)
        return out

    def __repr__(self):
        return f"FormalHamiltonian({len(self.terms)} terms, cap={self.degree_cap}, field={self.field!r})"

    def __eq__(self, other):
        if not isinstance(other, FormalHamiltonian):
            return NotImplemented
        return self.terms == other.terms

    __hash__ = None

    # arithmetic

    def with_cap(self, cap: int) -> "FormalHamiltonian":
        """Copy with ``degree_cap = cap``, dropping terms above it."""
        if cap >= self.degree_cap and (not self.terms or self.max_degree <= cap):
            return FormalHamiltonian(self.terms, self.field, cap)
        t = {k: c for k, c in self.terms.items() if key_degree(k) <= cap}
        return FormalHamiltonian(t, self.field, cap)

    def _combine(self, other, sign):
        if other.field != self.field:
            raise ValidationError("cannot combine Hamiltonians over different fields")
        cap = min(self.degree_cap, other.degree_cap)
        is_zero = self.field.is_zero
        if self.max_degree <= cap:
            t = dict(self.terms)
        else:
            t = {k: c for k, c in self.terms.items() if key_degree(k) <= cap}
        check = other.max_degree > cap
        for k, c in other.terms.items():
            if check and key_degree(k) > cap:
                continue
            v = t.get(k)
            v = (c if sign > 0 else -c) if v is None else (v + c if sign > 0 else v - c)
            if is_zero(v):
                t.pop(k, None)
            else:
                t[k] = v
        return FormalHamiltonian(t, self.field, cap)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return FormalHamiltonian({k: -c for k, c in self.terms.items()}, self.field, self.degree_cap)

    def scale(self, x) -> "FormalHamiltonian":
        """Multiply by a real scalar (keeps the reality condition)."""
        x = self.field.real(x)
        if self.field.real_is_zero(x):
            return FormalHamiltonian({}, self.field, self.degree_cap)
        x = self.field.convert(x)
        is_zero = self.field.is_zero
        t = {}
        for k, c in self.terms.items():
            v = c * x
            if not is_zero(v):
                t[k] = v
        return FormalHamiltonian(t, self.field, self.degree_cap)

    def to_field(self, field) -> "FormalHamiltonian":
        conv = field.convert
        t = {}
        for k, c in self.terms.items():
            v = conv(c)
            if not field.is_zero(v):
                t[k] = v
        return FormalHamiltonian(t, field, self.degree_cap)

    def filter_degree(self, lo=-math.inf, hi=math.inf) -> "FormalHamiltonian":
        """Terms with ``lo <= degree <= hi``."""
        t = {k: c for k, c in self.terms.items() if lo <= key_degree(k) <= hi}
        return FormalHamiltonian(t, self.field, self.degree_cap)

    def kernel_part(self) -> "FormalHamiltonian":
        return FormalHamiltonian({k: c for k, c in self.terms.items() if k[0] == k[1]}, self.field, self.degree_cap)

    def range_part(self) -> "FormalHamiltonian":
        return FormalHamiltonian({k: c for k, c in self.terms.items() if k[0] != k[1]}, self.field, self.degree_cap)

    def max_abs_difference(self, other) -> float:
        keys = set(self.terms) | set(other.terms)
        mod = self.field.modulus
        z = self.field.zero
        return max((float(mod(self.terms.get(k, z) - other.terms.get(k, z))) for k in keys), default=0.0)


def zero(field=RATIONAL, degree_cap: int = 0) -> FormalHamiltonian:
    return FormalHamiltonian({}, field, degree_cap)


def build(monomials: Iterable, degree_cap: int, field=RATIONAL) -> FormalHamiltonian:
    """Validated Hamiltonian from ``(alpha, beta, coefficient)`` triples.

    ``alpha`` and ``beta`` may be mappings or ``MultiIndex`` tuples. Both
    orientations of a key may be given only with conjugate coefficients;
    repeated entries for the same orientation are summed first.

    Raises
    ------
    MomentumViolation
        A key with nonzero momentum.
    ForbiddenTerm
        A constant term or a linear term in ``u_0``, ``conj(u_0)``.
    RealityConflict
        Orientations supplied with non-conjugate values, or a non-real
        coefficient on a self-conjugate key.
    DegreeOverflow
        A key above ``degree_cap``.
    """
    given: dict = {}
    for entry in monomials:
        alpha, beta, c = entry
        a = ix.multi_index(alpha) if not isinstance(alpha, tuple) else ix.multi_index(alpha)
        b = ix.multi_index(beta) if not isinstance(beta, tuple) else ix.multi_index(beta)
        validate_key(a, b, degree_cap)
        v = field.convert(c)
        given[(a, b)] = given[(a, b)] + v if (a, b) in given else v
    return _merge_orientations(given, field, degree_cap)


def _merge_orientations(given: dict, field, degree_cap: int) -> FormalHamiltonian:
    terms = {}
    for (a, b), v in given.items():
        key, swapped = canonical(a, b)
        if a == b:
            if not field.is_zero(v - field.conj(v)):
                raise RealityConflict(f"non-real coefficient {v} on {format_key(key)}")
        if swapped:
            if key in given:
                if not field.is_zero(given[key] - field.conj(v)):
                    raise RealityConflict(
                        f"{format_key(key)} and its swap carry non-conjugate values"
                    )
                continue
            v = field.conj(v)
        if not field.is_zero(v):
            terms[key] = v
    return FormalHamiltonian(terms, field, degree_cap)


def decompose(H: FormalHamiltonian) -> list[tuple]:
    """Canonical ``(alpha, beta, coefficient)`` list, inverse of :func:`build`."""
    return [(a, b, c) for (a, b), c in sorted(H.terms.items())]


_DEG = re.compile(r"^deg\s*(=|<=|>=|<|>)\s*(-?\d+)$")


def project(H: FormalHamiltonian, selector: str) -> FormalHamiltonian:
    """Coefficient filter.

    ``selector`` is ``"K"`` (``alpha == beta``), ``"R"`` (``alpha != beta``)
    or a degree condition ``"deg=d"``, ``"deg<=d"``, ``"deg>=d"``,
    ``"deg<d"``, ``"deg>d"``.
    """
    sel = selector.strip()
    if sel == "K":
        return H.kernel_part()
    if sel == "R":
        return H.range_part()
    m = _DEG.match(sel)
    if not m:
        raise ValueError(f"unknown selector {selector!r}")
    op, d = m.group(1), int(m.group(2))
    lo, hi = {
        "=": (d, d),
        "<=": (-math.inf, d),
        ">=": (d, math.inf),
        "<": (-math.inf, d - 1),
        ">": (d + 1, math.inf),
    }[op]
    return H.filter_degree(lo, hi)


def majorant(H: FormalHamiltonian) -> FormalHamiltonian:
    """Coefficientwise modulus.

    In rational mode the modulus stays exact when it is rational; if any
    modulus is irrational the result is returned in binary64.
    """
    f = H.field
    if isinstance(f, RationalField):
        exact = {}
        for k, c in H.terms.items():
            m = _exact_modulus(c)
            if m is None:
                break
            exact[k] = f.convert(m)
        else:
            return FormalHamiltonian(exact, f, H.degree_cap)
        return majorant(H.to_field(F64))
    return FormalHamiltonian({k: f.convert(f.modulus(c)) for k, c in H.terms.items()}, f, H.degree_cap)


def _exact_modulus(c):
    x, y = RATIONAL.re_im(c)
    if y == 0:
        return abs(x)
    if x == 0:
        return abs(y)
    q = x * x + y * y
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


@dataclass
class Frequency:
    """Frequencies ``omega_j = j**2 + xi_j`` with ``|xi_j| <= 1/2``.

    Parameters
    ----------
    gamma
        Diophantine constant attached to the frequency.
    seed
        Seed for the unspecified ``xi_j``; ``None`` means ``xi_j = 0``.
    overrides
        Explicit ``site -> xi`` values (``Fraction`` or ``float``).
    denominator
        If set, seeded values are rounded to ``Fraction(k, denominator)``
        so the frequency is exactly rational.
    """

    gamma: float = 1e-3
    seed: int | None = None
    overrides: dict = dc_field(default_factory=dict)
    denominator: int | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for j, x in self.overrides.items():
            if abs(x) > Fraction(1, 2):
                raise ValidationError(f"|xi_{j}| = {abs(x)} > 1/2")

    def xi(self, j: int):
        j = int(j)
        if j in self.overrides:
            return self.overrides[j]
        c = self._cache.get(j)
        if c is not None:
            return c
        if self.seed is None:
            v = Fraction(0) if self.denominator else 0.0
        else:
            enc = 2 * j if j >= 0 else -2 * j - 1
            rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), enc]))
            x = float(rng.uniform(-0.5, 0.5))
            if self.denominator:
                v = Fraction(round(x * self.denominator), self.denominator)
            else:
                v = x
        self._cache[j] = v
        return v

    def omega(self, j: int):
        """``j**2 + xi_j`` as ``Fraction`` or ``float``."""
        x = self.xi(j)
        if isinstance(x, Fraction):
            return j * j + x
        return float(j * j) + float(x)

    def omega_in(self, field, j: int):
        return field.real(self.omega(j))

    @property
    def is_exact(self) -> bool:
        if self.seed is not None and not self.denominator:
            return False
        return all(isinstance(x, (int, Fraction)) for x in self.overrides.values())

    def dot(self, ell, field=None):
        """``omega . ell`` for a signed index given as ``(site, value)`` pairs."""
        if field is None:
            return sum(self.omega(j) * v for j, v in ell)
        return sum((field.real(self.omega(j)) * v for j, v in ell), field.real(0))


def d_omega(freq: Frequency, window, degree_cap: int = 0, field=RATIONAL) -> FormalHamiltonian:
    """Truncation ``sum_{j in window} omega_j |u_j|^2``.

    ``window`` is an iterable of sites or a ``(lo, hi)`` pair (inclusive).
    """
    sites = _window_sites(window)
    t = {}
    for j in sites:
        w = field.convert(freq.omega(j))
        if not field.is_zero(w):
            e = ((j, 1),)
            t[(e, e)] = w
    return FormalHamiltonian(t, field, degree_cap)


def _window_sites(window):
    if isinstance(window, tuple) and len(window) == 2 and all(isinstance(x, int) for x in window):
        lo, hi = window
        return list(range(lo, hi + 1))
    return list(window)


def _monomials_by_size(sites, max_size):
    """Multi-indices over ``sites`` grouped as ``out[size][momentum]``."""
    out = [dict() for _ in range(max_size + 1)]
    out[0][0] = [ix.EMPTY]
    for n in range(1, max_size + 1):
        for combo in _multisets(sites, n):
            v = ix.multi_index((s, 1) for s in combo)
            p = sum(combo)
            out[n].setdefault(p, []).append(v)
    return out


def _multisets(sites, n):
    import itertools

    return itertools.combinations_with_replacement(sorted(sites), n)


def momentum_keys(window, min_degree: int, max_degree: int) -> list:
    """Canonical admissible momentum-zero keys over ``window``, sorted."""
    sites = _window_sites(window)
    max_size = max_degree + 2
    monos = _monomials_by_size(sites, max_size)
    keys = []
    for n in range(max(min_degree, 0) + 2, max_size + 1):
        for a in range(n + 1):
            b = n - a
            for p, alphas in monos[a].items():
                betas = monos[b].get(p)
                if not betas:
                    continue
                for al in alphas:
                    for be in betas:
                        if al <= be:
                            keys.append((al, be))
    keys.sort(key=lambda k: (key_degree(k), k))
    return keys


def random_hamiltonian(
    seed: int,
    window,
    min_degree: int,
    degree_cap: int,
    density: float = 1.0,
    scale: float = 1.0,
    field=RATIONAL,
    n_terms: int | None = None,
    max_degree: int | None = None,
    kernel: bool | None = None,
) -> FormalHamiltonian:
    """Reproducible random Hamiltonian on a site window.

    Parameters
    ----------
    seed
        RNG seed.
    window
        Sites, or ``(lo, hi)`` inclusive.
    min_degree, degree_cap
        Degree range of the emitted keys; ``max_degree`` (default
        ``degree_cap``) can limit the keys further without lowering the cap.
    density
        Probability that an eligible key is kept.
    scale
        Coefficient magnitude; exact mode draws ``k/8`` with ``|k| <= 8``.
    n_terms
        If given, draw exactly this many keys (overrides ``density``).
    kernel
        ``True`` keeps only ``alpha == beta`` keys, ``False`` only range keys.
    """
    if min_degree < 1:
        raise ValidationError("random perturbations start at degree 1")
    rng = np.random.default_rng(seed)
    hi = degree_cap if max_degree is None else min(max_degree, degree_cap)
    keys = momentum_keys(window, min_degree, hi)
    if kernel is True:
        keys = [k for k in keys if k[0] == k[1]]
    elif kernel is False:
        keys = [k for k in keys if k[0] != k[1]]
    if n_terms is not None:
        n = min(n_terms, len(keys))
        chosen = sorted(rng.choice(len(keys), size=n, replace=False).tolist()) if n else []
        keys = [keys[i] for i in chosen]
    else:
        if density <= 0:
            return FormalHamiltonian({}, field, degree_cap)
        mask = rng.random(len(keys)) < density
        keys = [k for k, m in zip(keys, mask) if m]
    exact = isinstance(field, RationalField)
    terms = {}
    for k in keys:
        self_conj = k[0] == k[1]
        if exact:
            re_ = Fraction(int(rng.integers(-8, 9)), 8) * Fraction(scale)
            im_ = Fraction(0) if self_conj else Fraction(int(rng.integers(-8, 9)), 8) * Fraction(scale)
            c = field.convert((re_, im_))
        else:
            re_ = float(rng.uniform(-1, 1)) * scale
            im_ = 0.0 if self_conj else float(rng.uniform(-1, 1)) * scale
            c = field.convert((re_, im_))
        if not field.is_zero(c):
            terms[k] = c
    return FormalHamiltonian(terms, field, degree_cap)


# file format

_LINE = re.compile(r"^alpha\{([^}]*)\}\s+beta\{([^}]*)\}\s+(\S+)\s+(\S+)$")


def _parse_index(text, line):
    text = text.strip()
    if not text:
        return ix.EMPTY
    pairs = []
    for part in text.split(","):
        try:
            s, e = part.split(":")
            pairs.append((int(s), int(e)))
        except ValueError as exc:
            raise ParseError(f"bad index entry {part!r}", line) from exc
    try:
        return ix.multi_index(pairs)
    except ValidationError as exc:
        raise ParseError(str(exc), line) from exc


def dumps(H: FormalHamiltonian) -> str:
    """Serialize in the line-oriented text format."""
    f = H.field
    out = [f"degree_cap {H.degree_cap}", f"precision {f.label()}"]
    for a, b, c in decompose(H):
        re_, im_ = f.re_im(c)
        out.append(
            f"alpha{ix.format_index(a)} beta{ix.format_index(b)} {f.format_real(re_)} {f.format_real(im_)}"
        )
    return "\n".join(out) + "\n"


def loads(text: str, field=None) -> FormalHamiltonian:
    """Parse the text format.

    Every error is a :class:`ParseError` carrying the 1-based line number.
    """
    cap = None
    fld = field
    given: dict = {}
    origin: dict = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("degree_cap"):
            try:
                cap = int(line.split()[1])
            except (IndexError, ValueError) as exc:
                raise ParseError("bad degree_cap header", lineno) from exc
            continue
        if line.startswith("precision"):
            try:
                header_field = field_from_label(line.split()[1])
            except (IndexError, ValueError) as exc:
                raise ParseError("bad precision header", lineno) from exc
            if fld is None:
                fld = header_field
            continue
        m = _LINE.match(line)
        if not m:
            raise ParseError(f"malformed monomial line {line!r}", lineno)
        if cap is None:
            raise ParseError("degree_cap header must precede monomials", lineno)
        if fld is None:
            fld = RATIONAL
        a = _parse_index(m.group(1), lineno)
        b = _parse_index(m.group(2), lineno)
        try:
            validate_key(a, b, cap)
            re_ = fld.parse_real(m.group(3))
            im_ = fld.parse_real(m.group(4))
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from exc
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad coefficient: {exc}", lineno) from exc
        v = fld.convert((re_, im_))
        given[(a, b)] = given[(a, b)] + v if (a, b) in given else v
        origin.setdefault((a, b), lineno)
        origin.setdefault(canonical(a, b)[0], lineno)
    if cap is None:
        raise ParseError("missing degree_cap header", None)
    try:
        return _merge_orientations(given, fld or RATIONAL, cap)
    except ValidationError as exc:
        line = None
        for k, ln in origin.items():
            if format_key(k) in str(exc):
                line = ln
                break
        raise ParseError(str(exc), line) from exc


def write_hamiltonian(H: FormalHamiltonian, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(H))


def read_hamiltonian(path, field=None) -> FormalHamiltonian:
    with open(path) as fh:
        return loads(fh.read(), field)
