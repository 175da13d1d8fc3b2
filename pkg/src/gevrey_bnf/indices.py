"""Finitely supported multi-indices and their rearrangement combinatorics.

A ``MultiIndex`` is stored as a sorted tuple of ``(site, exponent)`` pairs
with strictly positive exponents, which makes it hashable, immutable and
cheap to compare. A ``SignedIndex`` uses the same layout but allows negative
values (never zero).

The rearrangement helpers implement the decreasing list ``n_hat`` of site
magnitudes, the signed list ``m`` of a difference ``alpha - beta`` and the
sign vector ``sigma`` with ``sum_l sigma_l n_hat_l = 0``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Tuple

from .errors import DegreeUnderflow, ValidationError

MultiIndex = Tuple[Tuple[int, int], ...]
SignedIndex = Tuple[Tuple[int, int], ...]

EMPTY: MultiIndex = ()


def jap(j: int) -> int:
    """Japanese bracket ``<j> = max(|j|, 1)``."""
    j = abs(j)
    return j if j > 1 else 1


def multi_index(entries: Mapping[int, int] | Iterable[tuple[int, int]] | None = None) -> MultiIndex:
    """Build a canonical ``MultiIndex`` from a mapping or pair iterable.

    Repeated sites are summed, zero exponents dropped.

    Raises
    ------
    ValidationError
        If an exponent is negative or not an integer.
    """
    if entries is None:
        return EMPTY
    items = entries.items() if isinstance(entries, Mapping) else entries
    acc: dict[int, int] = {}
    for site, e in items:
        if int(e) != e or int(site) != site:
            raise ValidationError(f"non-integer entry {site}:{e}")
        if e < 0:
            raise ValidationError(f"negative exponent {e} at site {site}")
        acc[int(site)] = acc.get(int(site), 0) + int(e)
    return tuple(sorted((s, e) for s, e in acc.items() if e))


def signed_index(entries: Mapping[int, int] | Iterable[tuple[int, int]] | None = None) -> SignedIndex:
    if entries is None:
        return EMPTY
    items = entries.items() if isinstance(entries, Mapping) else entries
    acc: dict[int, int] = {}
    for site, e in items:
        acc[int(site)] = acc.get(int(site), 0) + int(e)
    return tuple(sorted((s, e) for s, e in acc.items() if e))


def as_dict(v: MultiIndex) -> dict[int, int]:
    return dict(v)


def total(v: MultiIndex) -> int:
    """``|v| = sum_j v_j``."""
    return sum(e for _, e in v)


def get(v: MultiIndex, j: int) -> int:
    for s, e in v:
        if s == j:
            return e
        if s > j:
            return 0
    return 0


def support(v: MultiIndex) -> tuple[int, ...]:
    return tuple(s for s, _ in v)


def add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for s, e in b:
        d[s] = d.get(s, 0) + e
    return tuple(sorted(d.items()))


def difference(a: MultiIndex, b: MultiIndex) -> SignedIndex:
    """Signed index ``a - b``."""
    d = dict(a)
    for s, e in b:
        d[s] = d.get(s, 0) - e
    return tuple(sorted((s, e) for s, e in d.items() if e))


def shift(v: MultiIndex, j: int, k: int) -> MultiIndex:
    """Add ``k`` (possibly negative) to the exponent at site ``j``."""
    d = dict(v)
    e = d.get(j, 0) + k
    if e < 0:
        raise ValidationError(f"exponent at site {j} would become negative")
    if e:
        d[j] = e
    else:
        d.pop(j, None)
    return tuple(sorted(d.items()))


def format_index(v: MultiIndex) -> str:
    return "{" + ",".join(f"{s}:{e}" for s, e in v) + "}"


def momentum(alpha: MultiIndex, beta: MultiIndex) -> int:
    """``pi(alpha, beta) = sum_j j (alpha_j - beta_j)``."""
    return sum(s * e for s, e in alpha) - sum(s * e for s, e in beta)


def scaling_degree(alpha: MultiIndex, beta: MultiIndex) -> int:
    """Homogeneity degree minus two.

    Raises
    ------
    DegreeUnderflow
        If ``|alpha| + |beta| < 2``.
    """
    n = total(alpha) + total(beta)
    if n < 2:
        raise DegreeUnderflow(f"|alpha|+|beta| = {n} < 2")
    return n - 2


def splits(alpha: MultiIndex) -> list[tuple[MultiIndex, MultiIndex]]:
    """All ordered pairs ``(a1, a2)`` with ``a1 + a2 = alpha``.

    The list has ``prod_j (alpha_j + 1)`` entries, in lexicographic order of
    the exponents given to ``a1``.
    """
    sites = [s for s, _ in alpha]
    ranges = [range(e + 1) for _, e in alpha]
    out = []
    for combo in itertools.product(*ranges):
        a1 = tuple((s, k) for s, k in zip(sites, combo) if k)
        a2 = tuple((s, e - k) for (s, e), k in zip(alpha, combo) if e - k)
        out.append((a1, a2))
    return out


def _admissible(a: MultiIndex, b: MultiIndex) -> bool:
    """Key allowed in a Hamiltonian: no constant, no linear term."""
    return total(a) + total(b) >= 2


def bracket_support(alpha: MultiIndex, beta: MultiIndex, admissible_only: bool = False):
    """Key pairs and sites contributing to ``(alpha, beta)`` in a bracket.

    Enumerates every ``((a1, b1), (a2, b2), j)`` with momentum-zero parts,
    ``(alpha, beta) = (a1, b1) + (a2, b2) - (e_j, e_j)`` and
    ``a1_j b2_j + a2_j b1_j != 0``. The site ``e_j`` removed from both sides
    is either carried by one part on both sides, in which case ``j`` lies in
    the support of the other part, or split between the parts, in which case
    ``j`` is fixed by momentum.

    Parameters
    ----------
    admissible_only
        Keep only parts with ``|a|+|b| >= 2``.

    Returns
    -------
    list
        Sorted, duplicate-free list of triples.
    """
    if momentum(alpha, beta) != 0:
        raise ValidationError("bracket_support needs a momentum-zero key")
    found = set()
    for a1, a2 in splits(alpha):
        for b1, b2 in splits(beta):
            p1 = momentum(a1, b1)
            cands = []
            # e_j on both sides of the first part
            for j in set(support(a2)) | set(support(b2)):
                cands.append(((shift(a1, j, 1), shift(b1, j, 1)), (a2, b2), j))
            for j in set(support(a1)) | set(support(b1)):
                cands.append(((a1, b1), (shift(a2, j, 1), shift(b2, j, 1)), j))
            # e_j split between the parts
            j = -p1
            cands.append(((shift(a1, j, 1), b1), (a2, shift(b2, j, 1)), j))
            j = p1
            cands.append(((a1, shift(b1, j, 1)), (shift(a2, j, 1), b2), j))
            for (x1, y1), (x2, y2), j in cands:
                if momentum(x1, y1) or momentum(x2, y2):
                    continue
                if get(x1, j) * get(y2, j) + get(x2, j) * get(y1, j) == 0:
                    continue
                if admissible_only and not (_admissible(x1, y1) and _admissible(x2, y2)):
                    continue
                found.add(((x1, y1), (x2, y2), j))
    return sorted(found)


def bracket_support_bruteforce(alpha: MultiIndex, beta: MultiIndex, admissible_only: bool = False):
    """Reference enumeration over every site in a window large enough to be exhaustive."""
    radius = sum(abs(s) * e for s, e in alpha) + sum(abs(s) * e for s, e in beta)
    found = set()
    for j in range(-radius, radius + 1):
        A = shift(alpha, j, 1)
        B = shift(beta, j, 1)
        for x1, x2 in splits(A):
            for y1, y2 in splits(B):
                if momentum(x1, y1) or momentum(x2, y2):
                    continue
                if get(x1, j) * get(y2, j) + get(x2, j) * get(y1, j) == 0:
                    continue
                if admissible_only and not (_admissible(x1, y1) and _admissible(x2, y2)):
                    continue
                found.add(((x1, y1), (x2, y2), j))
    return sorted(found)


@dataclass(frozen=True)
class Rearrangement:
    """Decreasing site-magnitude list ``values`` and signed list ``signed``.

    Attributes
    ----------
    values
        ``n_hat``, non-increasing, entries >= 1.
    signed
        ``m``, ordered by non-increasing magnitude, entries nonzero.
    D
        Length of ``signed``.
    N
        Length of ``values``.
    """

    values: tuple[int, ...]
    signed: tuple[int, ...] = ()
    D: int = 0
    N: int = 0

    def __post_init__(self):
        vals = self.values
        if any(x < 1 for x in vals) or any(vals[k] < vals[k + 1] for k in range(len(vals) - 1)):
            raise ValidationError("n_hat must be non-increasing with entries >= 1")
        mags = [abs(x) for x in self.signed]
        if any(x < 1 for x in mags) or any(mags[k] < mags[k + 1] for k in range(len(mags) - 1)):
            raise ValidationError("m must be ordered by non-increasing magnitude")


def n_hat(v: MultiIndex) -> tuple[int, ...]:
    out = []
    for s, e in v:
        out.extend([jap(s)] * e)
    out.sort(reverse=True)
    return tuple(out)


def rearrangement(v: MultiIndex) -> Rearrangement:
    """Decreasing rearrangement of the site magnitudes of ``v``.

    Raises
    ------
    DegreeUnderflow
        If ``|v| < 2``.
    """
    if total(v) < 2:
        raise DegreeUnderflow(f"|v| = {total(v)} < 2")
    vals = n_hat(v)
    return Rearrangement(values=vals, N=len(vals))


def signed_list(u: SignedIndex) -> tuple[tuple[int, ...], int]:
    """Sites ``j != 0`` repeated ``|u_j|`` times, by non-increasing ``|j|``.

    Ties in magnitude put the positive site first.
    """
    m = []
    for s, e in u:
        if s != 0:
            m.extend([s] * abs(e))
    m.sort(key=lambda j: (-abs(j), -j))
    return tuple(m), len(m)


def full_rearrangement(alpha: MultiIndex, beta: MultiIndex) -> Rearrangement:
    """``n_hat(alpha+beta)`` together with ``m(alpha-beta)``."""
    r = rearrangement(add(alpha, beta))
    m, D = signed_list(difference(alpha, beta))
    return Rearrangement(values=r.values, signed=m, D=D, N=r.N)


def sigma_signs(alpha: MultiIndex, beta: MultiIndex) -> tuple[int, ...]:
    """Signs aligned with ``n_hat(alpha+beta)`` summing it to zero.

    For a magnitude ``h > 1`` the sign ``+`` is used ``alpha_h + beta_{-h}``
    times and ``-`` is used ``alpha_{-h} + beta_h`` times. For ``h = 1`` the
    site-0 entries get sign 0. Within equal values the order is ``+, -, 0``.

    Raises
    ------
    ValidationError
        If the momentum is nonzero.
    """
    if momentum(alpha, beta) != 0:
        raise ValidationError("sigma signs exist only for momentum-zero keys")
    if total(alpha) + total(beta) < 2:
        raise DegreeUnderflow("|alpha|+|beta| < 2")
    a, b = dict(alpha), dict(beta)
    counts: dict[int, list[int]] = {}
    for h in set(jap(s) for s in itertools.chain(a, b)):
        plus = a.get(h, 0) + b.get(-h, 0)
        minus = a.get(-h, 0) + b.get(h, 0)
        zero = a.get(0, 0) + b.get(0, 0) if h == 1 else 0
        counts[h] = [1] * plus + [-1] * minus + [0] * zero
    out = []
    for h in sorted(counts, reverse=True):
        out.extend(counts[h])
    return tuple(out)
