"""Poisson bracket, adjoint powers, Lie transforms and BCH composition.

All operations take an explicit degree cap and never grow the support of
their inputs beyond the union of the input supports. The bracket of
``F`` of degree ``d1`` and ``G`` of degree ``d2`` has degree ``d1 + d2``,
so the output cap also accounts for how far each input is known:
``min(cap, F.degree_cap + G.min_degree, G.degree_cap + F.min_degree)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import lru_cache
from operator import add

from gmpy2 import mpq

from .errors import OrderViolation
from .formal_hamiltonian import FormalHamiltonian, key_degree

# bracket sizes below this are never sent to worker processes
_PARALLEL_MIN_PAIRS = 200_000
# bits per exponent in packed monomials; exponents never exceed cap + 2
_SLOT = 16


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("GEVREY_BNF_WORKERS", "1")))
    except ValueError:
        return 1


def _effective_cap(F, G, cap):
    c = min(F.degree_cap + G.min_degree, G.degree_cap + F.min_degree)
    if cap is not None:
        c = min(c, cap)
    return c


def _dense(a, b, pos, n):
    v = [0] * (2 * n)
    for s, e in a:
        v[pos[s]] = e
    for s, e in b:
        v[n + pos[s]] = e
    return tuple(v)


def _prepare(H, pos, n):
    """Canonical keys as (dense vector, alpha support, beta support, degree, coefficient, self-conjugate)."""
    out = []
    for (a, b), c in H.terms.items():
        out.append((_dense(a, b, pos, n), frozenset(pos[s] for s, _ in a),
                    frozenset(pos[s] for s, _ in b), key_degree((a, b)), c, a == b))
    out.sort(key=lambda t: t[3])
    return out


def _prepare_full(H, pos, n):
    by_deg: dict[int, list] = {}
    for a, b, c in H.items_full():
        by_deg.setdefault(key_degree((a, b)), []).append(
            (_dense(a, b, pos, n), frozenset(pos[s] for s, _ in a), frozenset(pos[s] for s, _ in b), c)
        )
    return sorted(by_deg.items())


_INTS: dict = {}


def _small_ints(field):
    # multiplying by a native int is slow for some scalar types
    t = _INTS.get(field)
    if t is None:
        t = _INTS[field] = {k: field.convert(k) for k in range(-64, 65)}
    return t


def _raw_bracket(f_items, g_groups, cap, field, n):
    """Raw sum without the leading factor ``i`` on dense keys, both orientations.

    Each canonical key of ``F`` is paired with every key of ``G``; the pair
    made of both conjugates contributes ``-conj(x)`` at the conjugate
    monomial, so it is added directly instead of being enumerated.
    """
    if field.exact:
        return _raw_bracket_exact(f_items, g_groups, cap, field, n)
    conj = field.conj
    ints = _small_ints(field)
    acc: dict = {}
    get = acc.get
    for v1, A1, B1, d1, c1, self_conj in f_items:
        for d2, group in g_groups:
            if d1 + d2 > cap:
                break
            for v2, A2, B2, c2 in group:
                act = (A1 & B2) | (B1 & A2)
                if not act:
                    continue
                c12 = c1 * c2
                m = list(map(add, v1, v2))
                for j in act:
                    jb = n + j
                    f = v1[j] * v2[jb] - v1[jb] * v2[j]
                    if not f:
                        continue
                    m[j] -= 1
                    m[jb] -= 1
                    key = tuple(m)
                    m[j] += 1
                    m[jb] += 1
                    x = c12 * (ints[f] if -64 <= f <= 64 else field.convert(f))
                    v = get(key)
                    acc[key] = x if v is None else v + x
                    if not self_conj:
                        key = key[n:] + key[:n]
                        y = -conj(x)
                        v = get(key)
                        acc[key] = y if v is None else v + y
    return acc


def _common_denominator(coeffs):
    L = 1
    for c in coeffs:
        L = math.lcm(L, int(c.x.denominator), int(c.y.denominator))
    return L


def _scaled(c, L):
    return int(c.x.numerator) * (L // int(c.x.denominator)), int(c.y.numerator) * (L // int(c.y.denominator))


def _raw_bracket_exact(f_items, g_groups, cap, field, n):
    """Same sum as :func:`_raw_bracket` for the exact field, on scaled integers.

    Each input is brought to a common denominator, so the inner loop runs on
    (re, im) pairs of Python ints without any gcd. Exponent vectors are packed
    into one integer with ``_SLOT`` bits per entry, which makes the monomial
    arithmetic and hashing cheap; ``G`` is grouped by support so the active
    sites are found once per group.
    """
    w = _SLOT
    sh = w * n
    low = (1 << sh) - 1

    def pack(v):
        code = 0
        for k, e in enumerate(v):
            code |= e << (w * k)
        return code

    Lf = _common_denominator(c for *_, c, _ in f_items)
    Lg = _common_denominator(c for _, group in g_groups for *_, c in group)
    g_split = []
    for d2, group in g_groups:
        by_support: dict = {}
        for v2, A2, B2, c2 in group:
            by_support.setdefault((A2, B2), []).append((v2, pack(v2)) + _scaled(c2, Lg))
        g_split.append((d2, list(by_support.items())))
    dec = [(j, n + j, (1 << (w * j)) | (1 << (w * (n + j)))) for j in range(n)]
    acc: dict = {}
    get = acc.get
    for v1, A1, B1, d1, c1, self_conj in f_items:
        x1, y1 = _scaled(c1, Lf)
        p1 = pack(v1)
        for d2, supports in g_split:
            if d1 + d2 > cap:
                break
            for (A2, B2), group in supports:
                act = (A1 & B2) | (B1 & A2)
                if not act:
                    continue
                act = [dec[j] for j in act]
                for v2, p2, x2, y2 in group:
                    re = x1 * x2 - y1 * y2
                    im = x1 * y2 + y1 * x2
                    base = p1 + p2
                    for j, jb, dj in act:
                        f = v1[j] * v2[jb] - v1[jb] * v2[j]
                        if not f:
                            continue
                        key = base - dj
                        ck = (key >> sh) | ((key & low) << sh)
                        # only the smaller of each conjugate pair of codes is
                        # accumulated; x goes to key and -conj(x) to ck
                        if key <= ck:
                            v = get(key)
                            if v is None:
                                acc[key] = [re * f, im * f]
                            else:
                                v[0] += re * f
                                v[1] += im * f
                        if ck <= key and not self_conj:
                            v = get(ck)
                            if v is None:
                                acc[ck] = [-re * f, im * f]
                            else:
                                v[0] -= re * f
                                v[1] += im * f
    new = field._new
    L = mpq(1, Lf * Lg)
    mask = (1 << w) - 1
    out = {}
    for key, (r, i) in acc.items():
        m = tuple((key >> (w * k)) & mask for k in range(2 * n))
        # the caller keeps the orientation with alpha <= beta, so store both
        out[m] = new(r * L, i * L)
        out[m[n:] + m[:n]] = new(-r * L, i * L)
    return out


def _chunk_worker(args):
    f_items, g_groups, cap, field, n = args
    return _raw_bracket(f_items, g_groups, cap, field, n)


def poisson(F: FormalHamiltonian, G: FormalHamiltonian, cap: int | None = None) -> FormalHamiltonian:
    """Canonical bracket ``{F, G} = i sum_j (dF/du_j dG/dubar_j - dF/dubar_j dG/du_j)``.

    Parameters
    ----------
    F, G
        Hamiltonians over the same field.
    cap
        Largest output degree; the effective cap is further limited by the
        caps of the inputs.

    Returns
    -------
    FormalHamiltonian
        Exact for degrees up to the effective cap.
    """
    field = F.field
    out_cap = _effective_cap(F, G, cap)
    if F.is_zero() or G.is_zero() or F.min_degree + G.min_degree > out_cap:
        return FormalHamiltonian({}, field, out_cap if out_cap != math.inf else (cap or 0))
    sign = 1
    if len(G.terms) > len(F.terms):
        # {F, G} = -{G, F}; the canonical side should be the larger one
        F, G, sign = G, F, -1
    sites = sorted(F.sites() | G.sites())
    n = len(sites)
    pos = {s: k for k, s in enumerate(sites)}
    f_items = _prepare(F, pos, n)
    g_groups = _prepare_full(G, pos, n)
    workers = _workers()
    if workers > 1 and len(f_items) * len(G.terms) >= _PARALLEL_MIN_PAIRS:
        chunks = [f_items[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_chunk_worker, [(c, g_groups, out_cap, field, n) for c in chunks]))
        acc: dict = {}
        for p in parts:
            for k, v in p.items():
                acc[k] = v if k not in acc else acc[k] + v
    else:
        acc = _raw_bracket(f_items, g_groups, out_cap, field, n)
    i = field.i if sign > 0 else -field.i
    is_zero = field.is_zero
    found = []
    for m, v in acc.items():
        al = tuple((sites[k], m[k]) for k in range(n) if m[k])
        be = tuple((sites[k], m[n + k]) for k in range(n) if m[n + k])
        if al <= be:
            found.append(((al, be), v))
    found.sort(key=lambda t: t[0])
    terms = {}
    for k, v in found:
        if is_zero(v):
            continue
        v = i * v
        if not is_zero(v):
            terms[k] = v
    out = FormalHamiltonian(terms, field, out_cap)
    if terms and out.min_degree < F.min_degree + G.min_degree:
        raise AssertionError("bracket violated the degree filtration")
    return out


def ad_power(S: FormalHamiltonian, H: FormalHamiltonian, k: int, cap: int | None = None) -> FormalHamiltonian:
    """``ad_S^k H`` with ``ad_S = {S, .}``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = H if cap is None else H.with_cap(min(cap, H.degree_cap))
    for _ in range(k):
        if out.is_zero():
            break
        out = poisson(S, out, cap)
    return out


def lie_series(S: FormalHamiltonian, H: FormalHamiltonian, coeffs, cap: int | None = None, start: int = 0):
    """``sum_{k >= start} coeffs(k) ad_S^k H`` truncated at ``cap``.

    ``coeffs`` maps ``k`` to a rational factor.
    """
    if not S.is_zero() and S.min_degree < 1:
        raise OrderViolation(f"generator has min degree {S.min_degree} < 1")
    top = H.degree_cap if cap is None else min(cap, H.degree_cap)
    term = H.with_cap(top)
    total = None
    k = 0
    while True:
        if k >= start:
            piece = term.scale(coeffs(k))
            total = piece if total is None else total + piece
        if term.is_zero() or S.is_zero():
            break
        term = poisson(S, term, top)
        k += 1
    if total is None:
        total = FormalHamiltonian({}, H.field, top)
    return total


def _inv_factorial(k):
    return Fraction(1, math.factorial(k))


def lie_transform(S: FormalHamiltonian, H: FormalHamiltonian, cap: int | None = None) -> FormalHamiltonian:
    """``exp(ad_S) H = sum_k ad_S^k H / k!`` truncated at ``cap``.

    Raises
    ------
    OrderViolation
        If ``S`` has a term of degree below 1.
    """
    return lie_series(S, H, _inv_factorial, cap)


@lru_cache(maxsize=None)
def _word_coefficient(word: str) -> Fraction:
    """Dynkin coefficient of the nested bracket of ``word`` over ``'G', 'F'``.

    Sums ``(-1)**(n-1) / (n L prod r_i! s_i!)`` over all ways of cutting the
    word into ``n`` blocks ``G**r F**s`` with ``r + s > 0``.
    """
    L = len(word)
    # dp[p] maps number of blocks -> sum of prod 1/(r! s!) for the prefix of length p
    dp = [dict() for _ in range(L + 1)]
    dp[0][0] = Fraction(1)
    for p in range(L):
        if not dp[p]:
            continue
        r = 0
        while True:
            q = p + r
            s = 0
            while True:
                e = q + s
                if r + s > 0:
                    w = Fraction(1, math.factorial(r) * math.factorial(s))
                    for n, v in dp[p].items():
                        dp[e][n + 1] = dp[e].get(n + 1, 0) + v * w
                if e < L and word[e] == "F":
                    s += 1
                else:
                    break
            if q < L and word[q] == "G":
                r += 1
            else:
                break
    total = Fraction(0)
    for n, v in dp[L].items():
        total += Fraction((-1) ** (n - 1), n) * v
    return total / L


def bch(G: FormalHamiltonian, F: FormalHamiltonian, cap: int | None = None) -> FormalHamiltonian:
    """``K`` with ``exp(ad_K) = exp(ad_G) exp(ad_F)`` up to ``cap``.

    Evaluates Dynkin's series ``sum_w c(w) [w_1, [w_2, ... w_L]]`` over
    words in ``G`` and ``F``. The sum is factored by common prefixes,
    ``R(p) = sum_y c(py) y + sum_y ad_y R(py)``, so each partial sum is only
    needed up to ``cap - deg(p)``; words whose minimal degree exceeds the cap
    never appear.

    Raises
    ------
    OrderViolation
        If ``F`` or ``G`` has a term of degree below 1.
    """
    for X, name in ((F, "F"), (G, "G")):
        if not X.is_zero() and X.min_degree < 1:
            raise OrderViolation(f"{name} has min degree {X.min_degree} < 1")
    top = min(F.degree_cap, G.degree_cap) if cap is None else min(cap, F.degree_cap, G.degree_cap)
    if F.is_zero():
        return G.with_cap(top)
    if G.is_zero():
        return F.with_cap(top)
    letters = (("G", G.with_cap(top), G.min_degree), ("F", F.with_cap(top), F.min_degree))
    dmin = min(G.min_degree, F.min_degree)
    field = F.field

    def partial(prefix, budget):
        out = FormalHamiltonian({}, field, budget)
        for y, X, d in letters:
            if d > budget:
                continue
            c = _word_coefficient(prefix + y)
            if c:
                out = out + X.with_cap(budget).scale(c)
        for y, X, d in letters:
            if d + dmin > budget:
                continue
            inner = partial(prefix + y, budget - d)
            if not inner.is_zero():
                out = out + poisson(X, inner, budget)
        return out

    return partial("", top).with_cap(top)


def compose_generators(S_list, cap: int | None = None) -> FormalHamiltonian:
    """Single generator of ``exp(ad_{S_n}) ... exp(ad_{S_0})``.

    ``S_list`` is in application order: ``S_0`` acts first. Zero entries are
    skipped; the remaining ones must have strictly increasing minimal degree.

    Raises
    ------
    OrderViolation
        If degrees are not strictly increasing or a degree is below 1.
    """
    S_all = list(S_list)
    S_list = [S for S in S_all if not S.is_zero()]
    if not S_list:
        if not S_all:
            raise ValueError("empty generator list")
        top = min(S.degree_cap for S in S_all) if cap is None else cap
        return FormalHamiltonian({}, S_all[0].field, top)
    prev = 0
    for S in S_list:
        if S.min_degree < 1 or S.min_degree <= prev:
            raise OrderViolation("generator degrees must be >= 1 and strictly increasing")
        prev = S.min_degree
    top = min(S.degree_cap for S in S_list) if cap is None else cap
    out = S_list[0].with_cap(min(top, S_list[0].degree_cap))
    for S in S_list[1:]:
        if S.min_degree > top:
            break
        out = bch(S, out, top)
    return out
