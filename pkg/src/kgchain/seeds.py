"""Sparse algebra of cyclically symmetric polynomials, stored by seed.

A seed f stands for the extensive function f^+(z) = sum_s f(tau^s z),
tau the left cyclic shift of the sites. Terms are monomials in the
per-site variables, encoded as tuples of (site, x_exp, y_exp) triples
sorted by site. The same machinery serves the real (x, y) variables
and the complex (xi, eta) pair; the flag only changes evaluation and
serialization, since the change of variables is canonical and the
bracket formula is identical in both charts.

Conventions fixed here once:
  {f, g} = sum_j (df/dx_j dg/dy_j - df/dy_j dg/dx_j)
  xi_j  = (x_j - i y_j)/sqrt(2),  eta_j = (y_j - i x_j)/sqrt(2)
so {xi_j, eta_j} = 1 and x_j = (xi_j + i eta_j)/sqrt(2).

Interaction length of a monomial is the minimal diameter of its
support over cyclic shifts; left alignment translates each term so
its support starts at site 0, choosing the smallest shift when
several rotations give the same diameter. Bracket results carry a
range-class assignment per monomial as metadata (the window bound of
the shift enumeration that produced it); range_decompose prefers that
metadata over the raw interaction length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    DegreeCapError,
    ParameterError,
    RepresentationError,
    SerializationError,
    TermBudgetError,
)
from .params import PhaseState

DEG_CAP = 16
TERM_GUARD = 10_000_000
_CHUNK_ROWS = 1 << 21
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Monomial:
    """One cyclic monomial: sorted (site, x_exp, y_exp) factors."""

    factors: tuple

    @property
    def degree(self):
        return sum(xe + ye for _, xe, ye in self.factors)

    @property
    def support(self):
        return tuple(s for s, _, _ in self.factors)

    def interaction_length(self, n):
        return _mono_align(self.factors, n)[1]


def _canon_key(triples, n):
    """Merge duplicate sites, drop zero factors, sort; validate."""
    acc = {}
    for s, xe, ye in triples:
        s = int(s)
        xe = int(xe)
        ye = int(ye)
        if not 0 <= s < n:
            raise ParameterError("site %d outside 0..%d" % (s, n - 1))
        if xe < 0 or ye < 0:
            raise ParameterError("negative exponent in monomial")
        if xe or ye:
            ox, oy = acc.get(s, (0, 0))
            acc[s] = (ox + xe, oy + ye)
    key = tuple((s, xe, ye) for s, (xe, ye) in sorted(acc.items()))
    deg = sum(xe + ye for _, xe, ye in key)
    if deg > DEG_CAP:
        raise DegreeCapError("monomial degree %d exceeds cap %d" % (deg, DEG_CAP))
    return key


def _mono_align(key, n):
    """Return (aligned_key, ell, shift) for one canonical monomial.

    ell is the minimal support diameter over cyclic rotations, found by
    cutting the circle at the widest empty gap. When several rotations
    tie, the lexicographically smallest aligned key wins; the choice
    depends only on the monomial's shift orbit, never on which
    representative came in, so equal monomials always collide.
    """
    if not key:
        return key, 0, 0  # constant: empty support, range class 0
    sites = [s for s, _, _ in key]
    k = len(sites)
    best_gap = -1
    for a in range(k):
        nxt = sites[a + 1] if a + 1 < k else sites[0] + n
        gap = nxt - sites[a] - 1
        if gap > best_gap:
            best_gap = gap
    best = None
    best_start = 0
    for a in range(k):
        nxt = sites[a + 1] if a + 1 < k else sites[0] + n
        if nxt - sites[a] - 1 != best_gap:
            continue
        si = (a + 1) % k
        start = sites[si]
        cand = tuple(((key[(si + idx) % k][0] - start) % n,
                      key[(si + idx) % k][1], key[(si + idx) % k][2])
                     for idx in range(k))
        if best is None or cand < best:
            best = cand
            best_start = start
    ell = n - 1 - best_gap
    shift = (n - best_start) % n
    return best, ell, shift


def _key_translate(key, s, n):
    return tuple(sorted(((site + s) % n, xe, ye) for site, xe, ye in key))


def _key_degree(key):
    return sum(xe + ye for _, xe, ye in key)


class SeedPoly:
    """Immutable-by-convention container: n, terms dict, representation.

    terms maps canonical monomial keys to coefficients (float when the
    representation is real, complex otherwise). meta, when present, maps
    each key to a tuple of (range_class, coefficient) pairs summing to
    the stored coefficient; only bracket products and their images under
    the structure-preserving ops carry it.
    """

    __slots__ = ("n", "terms", "is_complex", "meta", "_norm", "_packed")

    def __init__(self, n, terms, is_complex=False, meta=None):
        self.n = int(n)
        if self.n < 1:
            raise ParameterError("lattice size must be at least 1")
        self.terms = dict(terms)
        self.is_complex = bool(is_complex)
        self.meta = meta
        self._norm = None
        self._packed = None
        if len(self.terms) > TERM_GUARD:
            raise TermBudgetError("seed has %d terms, over the %d guard"
                                  % (len(self.terms), TERM_GUARD))

    @classmethod
    def from_terms(cls, n, items, is_complex=False):
        """Build from a mapping or iterable of (triples, coeff); triples
        need not be sorted or merged."""
        if hasattr(items, "items"):
            items = items.items()
        acc = {}
        for triples, c in items:
            key = _canon_key(triples, n)
            acc[key] = acc.get(key, 0.0) + c
        out = {}
        for key, c in acc.items():
            if is_complex:
                c = complex(c)
            else:
                if isinstance(c, complex):
                    if c.imag != 0.0:
                        raise RepresentationError(
                            "real representation forbids imaginary parts")
                    c = c.real
                c = float(c)
            if c != 0.0:
                out[key] = c
        return cls(n, out, is_complex=is_complex)

    @classmethod
    def zero(cls, n, is_complex=False):
        return cls(n, {}, is_complex=is_complex)

    @property
    def norm(self):
        if self._norm is None:
            self._norm = float(sum(abs(c) for c in self.terms.values()))
        return self._norm

    @property
    def degree(self):
        return max((_key_degree(k) for k in self.terms), default=0)

    def monomials(self):
        return [Monomial(k) for k in sorted(self.terms)]

    def pruned(self, eps):
        """Drop terms with |c| <= eps (metadata follows the kept keys)."""
        keep = {k: c for k, c in self.terms.items() if abs(c) > eps}
        meta = None
        if self.meta is not None:
            meta = {k: self.meta[k] for k in keep if k in self.meta}
        return SeedPoly(self.n, keep, self.is_complex, meta)

    def _compat(self, other):
        if self.n != other.n:
            raise ParameterError("lattice sizes differ: %d vs %d"
                                 % (self.n, other.n))
        if self.is_complex != other.is_complex:
            raise RepresentationError("mixed real/complex representations")

    def __add__(self, other):
        self._compat(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms.get(k, 0.0) + c
        terms = {k: c for k, c in terms.items() if c != 0.0}
        meta = None
        if self.meta is not None and other.meta is not None:
            meta = _meta_merge(self.meta, other.meta, terms)
        return SeedPoly(self.n, terms, self.is_complex, meta)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, scalar):
        if isinstance(scalar, SeedPoly):
            raise TypeError("only scalar multiples are defined for seeds")
        if scalar == 0:
            return SeedPoly.zero(self.n, self.is_complex)
        if self.is_complex:
            scalar = complex(scalar)
        else:
            scalar = float(scalar)
        terms = {k: c * scalar for k, c in self.terms.items()}
        meta = None
        if self.meta is not None:
            meta = {k: tuple((nu, c * scalar) for nu, c in pairs)
                    for k, pairs in self.meta.items()}
        return SeedPoly(self.n, terms, self.is_complex, meta)

    __rmul__ = __mul__

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return ("SeedPoly(n=%d, terms=%d, %s, norm=%.6g)"
                % (self.n, len(self.terms),
                   "complex" if self.is_complex else "real", self.norm))

    def _packed_aligned(self):
        """Per-term packed arrays for the kernels, sorted by |coeff|
        descending; every term is packed in left-aligned position."""
        if self._packed is not None:
            return self._packed
        T = len(self.terms)
        sites = np.zeros((max(T, 1), _kernels.MAX_TRIPLES), dtype=np.int64)
        xe = np.zeros_like(sites)
        ye = np.zeros_like(sites)
        kk = np.zeros(max(T, 1), dtype=np.int64)
        ell = np.zeros(max(T, 1), dtype=np.int64)
        cre = np.zeros(max(T, 1), dtype=np.float64)
        cim = np.zeros(max(T, 1), dtype=np.float64)
        order = sorted(self.terms.items(), key=lambda kv: -abs(kv[1]))
        for t, (key, c) in enumerate(order):
            akey, l, _ = _mono_align(key, self.n)
            if len(akey) > _kernels.MAX_TRIPLES:
                raise DegreeCapError("monomial touches more than %d sites"
                                     % _kernels.MAX_TRIPLES)
            for u, (s, a, b) in enumerate(akey):
                sites[t, u] = s
                xe[t, u] = a
                ye[t, u] = b
            kk[t] = len(akey)
            ell[t] = l
            cc = complex(c)
            cre[t] = cc.real
            cim[t] = cc.imag
        if T == 0:
            kk = kk[:0]
            ell = ell[:0]
            cre = cre[:0]
            cim = cim[:0]
            sites = sites[:0]
            xe = xe[:0]
            ye = ye[:0]
        self._packed = (sites, xe, ye, kk, ell, cre, cim)
        return self._packed


def _meta_merge(ma, mb, kept_terms):
    out = {}
    for key in kept_terms:
        bag = {}
        for src in (ma, mb):
            for nu, c in src.get(key, ()):
                bag[nu] = bag.get(nu, 0.0) + c
        if bag:
            out[key] = tuple(sorted(bag.items()))
    return out


# ---------------------------------------------------------------------------
# translations and alignment

def translate(f, s):
    """Shift every site index by s mod N. Norm is unchanged."""
    s = int(s) % f.n
    if s == 0:
        return f
    terms = {_key_translate(k, s, f.n): c for k, c in f.terms.items()}
    meta = None
    if f.meta is not None:
        meta = {_key_translate(k, s, f.n): v for k, v in f.meta.items()}
    return SeedPoly(f.n, terms, f.is_complex, meta)


def left_align(f):
    """Translate each term so its support sits in {0..ell}; terms that
    collide after alignment are merged."""
    terms = {}
    meta = {} if f.meta is not None else None
    for key, c in f.terms.items():
        akey, _, _ = _mono_align(key, f.n)
        terms[akey] = terms.get(akey, 0.0) + c
        if meta is not None and key in f.meta:
            bag = dict(meta.get(akey, ()))
            for nu, cc in f.meta[key]:
                bag[nu] = bag.get(nu, 0.0) + cc
            meta[akey] = tuple(sorted(bag.items()))
    return SeedPoly(f.n, terms, f.is_complex, meta)


# ---------------------------------------------------------------------------
# evaluation

def _state_to_cols(f, X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape != Y.shape or X.shape[1] != f.n:
        raise ParameterError("state arrays must be (M, %d)" % f.n)
    if f.is_complex:
        XI = (X - 1j * Y) / _SQRT2
        ETA = (Y - 1j * X) / _SQRT2
        return (np.ascontiguousarray(XI.T), np.ascontiguousarray(ETA.T))
    return (np.ascontiguousarray(X.T), np.ascontiguousarray(Y.T))


def _eval_numpy(packed, XT, YT, out):
    sites, xe, ye, kk, _, cre, cim = packed
    n = XT.shape[0]
    cplx = np.iscomplexobj(out)
    for t in range(len(kk)):
        c = cre[t] + 1j * cim[t] if cplx else cre[t]
        for s in range(n):
            p = np.full(XT.shape[1], c, dtype=out.dtype)
            for u in range(kk[t]):
                col = (sites[t, u] + s) % n
                p *= XT[col] ** xe[t, u]
                p *= YT[col] ** ye[t, u]
            out += p


def seed_eval_batch(f, X, Y):
    """Evaluate the extensive function of f on a batch of states.

    X, Y: arrays of shape (M, n) (or (n,) for a single state) holding the
    real phase-space coordinates; complex seeds are evaluated through the
    canonical complex variables and return complex values.
    """
    single = np.asarray(X).ndim == 1
    XT, YT = _state_to_cols(f, X, Y)
    M = XT.shape[1]
    if f.is_complex:
        out = np.zeros(M, dtype=np.complex128)
    else:
        out = np.zeros(M, dtype=np.float64)
    if len(f.terms):
        packed = f._packed_aligned()
        if _kernels.HAVE_NUMBA:
            sites, xe, ye, kk, _, cre, cim = packed
            if f.is_complex:
                _kernels.eval_complex_core(sites, xe, ye, kk, cre + 1j * cim,
                                           XT, YT, out)
            else:
                _kernels.eval_real_core(sites, xe, ye, kk, cre, XT, YT, out)
        else:
            _eval_numpy(packed, XT, YT, out)
    return out[0] if single else out


def extensive_eval(f, z):
    """Sum of f over all cyclic shifts of the state z (real seeds only)."""
    if f.is_complex:
        raise RepresentationError(
            "extensive_eval takes the real representation; use from_complex "
            "or seed_eval_batch for complex seeds")
    if isinstance(z, PhaseState):
        x, y = z.x, z.y
    else:
        x, y = z
    return float(seed_eval_batch(f, x, y))


def extensive_eval_batch(f, X, Y):
    """Vector extensive_eval over rows of (M, n) coordinate arrays."""
    if f.is_complex:
        raise RepresentationError(
            "extensive_eval_batch takes the real representation")
    return seed_eval_batch(f, X, Y)


# ---------------------------------------------------------------------------
# Poisson bracket of seeds

def poisson_seed(f, g, route="auto"):
    """Seed of the Poisson bracket of the two extensive functions.

    Enumerates {f_term, shifted g_term} over the relative shifts with
    overlapping support. When the combined ranges fit the chain
    (m + m' <= N - 2) the shift window is the triangle-rule one and each
    product is tagged with the range bound of its window; otherwise all N
    shifts contribute and products are tagged by their own interaction
    length, capped at floor(N/2). The tags land in result.meta.

    route: "auto" picks the compiled kernel for large inputs, "dict" the
    pure-python path, "kernel" forces the compiled one.
    """
    f._compat(g)
    n = f.n
    if not f.terms or not g.terms:
        return SeedPoly(n, {}, f.is_complex, {})
    df = f.degree
    dg = g.degree
    if df + dg - 2 > DEG_CAP:
        raise DegreeCapError("bracket degree %d exceeds cap %d"
                             % (df + dg - 2, DEG_CAP))
    eps = 1e-14 * df * dg * f.norm * g.norm
    if route == "auto":
        big = len(f.terms) * len(g.terms) > 20000
        route = "kernel" if (_kernels.HAVE_NUMBA and big and n <= 64) else "dict"
    if route == "kernel":
        if not _kernels.HAVE_NUMBA:
            raise RuntimeError("compiled kernels unavailable")
        if n > 64:
            raise ParameterError("packed kernel supports N <= 64")
        _, meta = _bracket_kernel(f, g, eps)
    else:
        _, meta = _bracket_dict(f, g)
    # store each coefficient as the bucket-wise fold of its range-class
    # pieces, in the same order range_decompose + total() will re-add
    # them, so the decomposition sums back exactly
    half = n // 2
    out_terms = {}
    out_meta = {}
    for key, bag in meta.items():
        pairs = sorted(bag.items())
        if not f.is_complex:
            pairs = [(nu, float(np.real(cc))) for nu, cc in pairs]
        c = _fold_total(pairs, half)
        if abs(c) > eps:
            out_terms[key] = c
            out_meta[key] = tuple(pairs)
    return SeedPoly(n, out_terms, f.is_complex, out_meta)


def _fold_total(pairs, half):
    """Left-fold of the per-bucket sums of (nu, coeff) pairs (sorted by
    nu), reproducing the addition order of summing decomposition parts."""
    tot = 0.0
    cur = 0.0
    curm = -1
    started = False
    for nu, cc in pairs:
        m = min(int(nu), half)
        if m != curm and started:
            tot = tot + cur
            cur = 0.0
        curm = m
        started = True
        cur = cur + cc
    if started:
        tot = tot + cur
    return tot


def _aligned_term_list(f):
    out = []
    for key, c in sorted(f.terms.items(), key=lambda kv: -abs(kv[1])):
        akey, l, _ = _mono_align(key, f.n)
        out.append((akey, l, c))
    return out


def _bracket_dict(f, g):
    n = f.n
    acc = {}
    meta = {}
    fa = _aligned_term_list(f)
    ga = _aligned_term_list(g)

    def emit(t1, t2, nu, c):
        d1 = {s: (a, b) for s, a, b in t1}
        d2 = {s: (a, b) for s, a, b in t2}
        for site in set(d1) & set(d2):
            x1, y1 = d1[site]
            x2, y2 = d2[site]
            if x1 and y2:
                _acc_product(acc, meta, d1, d2, site, "xy", x1 * y2 * c, nu, n)
            if y1 and x2:
                _acc_product(acc, meta, d1, d2, site, "yx", -y1 * x2 * c, nu, n)

    for kf, m, cf in fa:
        for kg, mp, cg in ga:
            c = cf * cg
            if m + mp <= n - 2:
                for s in range(mp + 1):
                    tf = [((site + s) % n, a, b) for site, a, b in kf]
                    emit(tf, kg, max(m + s, mp), c)
                for s in range(1, m + 1):
                    tg = [((site + s) % n, a, b) for site, a, b in kg]
                    emit(kf, tg, max(m, mp + s), c)
            else:
                for s in range(n):
                    tg = [((site + s) % n, a, b) for site, a, b in kg]
                    emit(kf, tg, -1, c)
    return acc, meta


def _acc_product(acc, meta, d1, d2, site, which, c, nu, n):
    merged = {}
    for s, (a, b) in d1.items():
        merged[s] = [a, b]
    if which == "xy":
        merged[site][0] -= 1
    else:
        merged[site][1] -= 1
    for s, (a, b) in d2.items():
        if s in merged:
            merged[s][0] += a
            merged[s][1] += b
        else:
            merged[s] = [a, b]
    if which == "xy":
        merged[site][1] -= 1
    else:
        merged[site][0] -= 1
    key = tuple((s, a, b) for s, (a, b) in sorted(merged.items()) if a or b)
    akey, ell, _ = _mono_align(key, n)
    if nu < 0:
        nu = min(ell, n // 2)
    acc[akey] = acc.get(akey, 0.0) + c
    bag = meta.setdefault(akey, {})
    bag[nu] = bag.get(nu, 0.0) + c


def _bracket_kernel(f, g, eps):
    n = f.n
    pf = f._packed_aligned()
    pg = g._packed_aligned()
    Tf = len(f.terms)
    Tg = len(g.terms)
    tau = 1e-14 * f.norm * g.norm / (Tf * Tg)
    out_w = np.empty((_CHUNK_ROWS, 4), dtype=np.int64)
    out_nu = np.empty(_CHUNK_ROWS, dtype=np.int64)
    out_re = np.empty(_CHUNK_ROWS, dtype=np.float64)
    out_im = np.empty(_CHUNK_ROWS, dtype=np.float64)
    pieces = None
    i, j = 0, 0
    while True:
        i, j, cnt = _kernels.bracket_core(
            pf[0], pf[1], pf[2], pf[3], pf[4], pf[5], pf[6],
            pg[0], pg[1], pg[2], pg[3], pg[4], pg[5], pg[6],
            n, tau, i, j, out_w, out_nu, out_re, out_im)
        if cnt:
            piece = _reduce_rows(out_w[:cnt], out_nu[:cnt],
                                 out_re[:cnt], out_im[:cnt])
            if pieces is None:
                pieces = piece
            else:
                pieces = _reduce_rows(
                    np.concatenate([pieces[0], piece[0]]),
                    np.concatenate([pieces[1], piece[1]]),
                    np.concatenate([pieces[2], piece[2]]),
                    np.concatenate([pieces[3], piece[3]]))
            if pieces[0].shape[0] > TERM_GUARD:
                raise TermBudgetError("bracket produced more than %d rows"
                                      % TERM_GUARD)
        if i < 0:
            break
    acc = {}
    meta = {}
    if pieces is None:
        return acc, meta
    w, nu, re, im = pieces
    coeff = re + 1j * im
    keys = [_unpack_key(w[r, 0], w[r, 1], w[r, 2], w[r, 3])
            for r in range(w.shape[0])]
    for r, key in enumerate(keys):
        acc[key] = acc.get(key, 0.0) + coeff[r]
        bag = meta.setdefault(key, {})
        nur = int(nu[r])
        bag[nur] = bag.get(nur, 0.0) + coeff[r]
    return acc, meta


def _reduce_rows(w, nu, re, im):
    order = np.lexsort((nu, w[:, 3], w[:, 2], w[:, 1], w[:, 0]))
    w = w[order]
    nu = nu[order]
    re = re[order]
    im = im[order]
    if w.shape[0] == 0:
        return w, nu, re, im
    change = np.empty(w.shape[0], dtype=bool)
    change[0] = True
    diff = (w[1:] != w[:-1]).any(axis=1) | (nu[1:] != nu[:-1])
    change[1:] = diff
    idx = np.flatnonzero(change)
    re_s = np.add.reduceat(re, idx)
    im_s = np.add.reduceat(im, idx)
    return w[idx], nu[idx], re_s, im_s


def _unpack_key(w0, w1, w2, w3):
    words = (int(w0), int(w1), int(w2), int(w3))
    out = []
    for idx in range(_kernels.MAX_TRIPLES):
        word = words[idx >> 2]
        trip = (word >> ((3 - (idx & 3)) << 4)) & 0xFFFF
        if trip == 0:
            break
        out.append((trip >> 10, (trip >> 5) & 0x1F, trip & 0x1F))
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# range decomposition and decay fitting

@dataclass(frozen=True)
class RangeDecomposition:
    """Split of a seed into range classes 0..floor(N/2); parts sum back
    to the seed coefficient-wise. The top class also collects the rare
    monomials whose minimal diameter exceeds floor(N/2)."""

    n: int
    parts: tuple

    @property
    def profile(self):
        return tuple(p.norm for p in self.parts)

    def total(self):
        out = SeedPoly.zero(self.n, self.parts[0].is_complex)
        for p in self.parts:
            out = out + p
        return out


@dataclass(frozen=True)
class DecayFit:
    """Certificate that every profile entry obeys C * exp(-sigma * m)."""

    C: float
    sigma: float
    profile: tuple


def range_decompose(f):
    """Range classes of f, from bracket metadata when available, else by
    each term's interaction length. Parts come out left aligned."""
    n = f.n
    half = n // 2
    buckets = [{} for _ in range(half + 1)]
    for key, c in f.terms.items():
        akey, ell, _ = _mono_align(key, n)
        pairs = f.meta.get(key) if f.meta is not None else None
        if pairs:
            for nu, cc in pairs:
                b = buckets[min(int(nu), half)]
                b[akey] = b.get(akey, 0.0) + cc
        else:
            b = buckets[min(ell, half)]
            b[akey] = b.get(akey, 0.0) + c
    parts = tuple(SeedPoly(n, {k: v for k, v in b.items() if v != 0.0},
                           f.is_complex)
                  for b in buckets)
    return RangeDecomposition(n, parts)


def fit_decay(d, sigma):
    """Smallest C with profile[m] <= C*exp(-sigma*m); inf when sigma is
    infinite but mass sits beyond class 0."""
    if not sigma > 0:
        raise ParameterError("decay rate must be positive")
    prof = d.profile
    C = 0.0
    for m, pm in enumerate(prof):
        if pm == 0.0:
            continue
        if math.isinf(sigma):
            if m > 0:
                C = math.inf
                break
            C = max(C, pm)
        else:
            C = max(C, pm * math.exp(sigma * m))
    return DecayFit(C=C, sigma=sigma, profile=prof)


# ---------------------------------------------------------------------------
# real <-> complex representation

@lru_cache(maxsize=4096)
def _site_to_complex(xe, ye):
    """Expansion of x^xe y^ye in (xi, eta): list of (a, b, coeff)."""
    scale = _SQRT2 ** (-(xe + ye))
    out = {}
    for i in range(xe + 1):
        for j in range(ye + 1):
            a = i + ye - j
            b = xe - i + j
            c = (math.comb(xe, i) * math.comb(ye, j)
                 * (1j ** (xe - i)) * (1j ** (ye - j)) * scale)
            out[(a, b)] = out.get((a, b), 0.0) + c
    return tuple((a, b, c) for (a, b), c in out.items() if c != 0.0)


@lru_cache(maxsize=4096)
def _site_from_complex(a, b):
    """Expansion of xi^a eta^b in (x, y): list of (xe, ye, coeff)."""
    scale = _SQRT2 ** (-(a + b))
    out = {}
    for i in range(a + 1):
        for j in range(b + 1):
            xe = i + b - j
            ye = a - i + j
            c = (math.comb(a, i) * math.comb(b, j)
                 * ((-1j) ** (a - i)) * ((-1j) ** (b - j)) * scale)
            out[(xe, ye)] = out.get((xe, ye), 0.0) + c
    return tuple((xe, ye, c) for (xe, ye), c in out.items() if c != 0.0)


def _substitute_sitewise(f, table):
    acc = {}
    for key, c in f.terms.items():
        partial = [((), c)]
        for site, e1, e2 in key:
            nxt = []
            for a, b, cc in table(e1, e2):
                if a or b:
                    for frag, pc in partial:
                        nxt.append((frag + ((site, a, b),), pc * cc))
                else:
                    for frag, pc in partial:
                        nxt.append((frag, pc * cc))
            partial = nxt
        for frag, pc in partial:
            acc[frag] = acc.get(frag, 0.0) + pc
    # canonicalize: merge translates onto their aligned keys, otherwise
    # reality of the function is invisible coefficient-by-coefficient
    out = {}
    for key, c in acc.items():
        akey, _, _ = _mono_align(key, f.n)
        out[akey] = out.get(akey, 0.0) + c
    return out


def to_complex(f):
    """Rewrite a real-representation seed in the complex variables."""
    if f.is_complex:
        raise RepresentationError("seed is already in the complex chart")
    acc = _substitute_sitewise(f, _site_to_complex)
    eps = 1e-14 * f.norm * 2.0 ** (f.degree / 2.0)
    terms = {k: c for k, c in acc.items() if abs(c) > eps}
    return SeedPoly(f.n, terms, is_complex=True)


def from_complex(f):
    """Inverse chart change; imaginary residue of every coefficient must
    stay below 1e-10 * norm(f) and is dropped."""
    if not f.is_complex:
        raise RepresentationError("seed is already in the real chart")
    acc = _substitute_sitewise(f, _site_from_complex)
    tol = 1e-10 * f.norm
    eps = 1e-14 * f.norm * 2.0 ** (f.degree / 2.0)
    terms = {}
    for k, c in acc.items():
        c = complex(c)
        if abs(c.imag) > tol:
            raise RepresentationError(
                "coefficient imaginary residue %.3e exceeds %.3e"
                % (abs(c.imag), tol))
        if abs(c.real) > eps:
            terms[k] = c.real
    return SeedPoly(f.n, terms, is_complex=False)


def conjugate_seed(f):
    """Seed of the complex conjugate function. In the complex chart the
    variables satisfy conj(xi) = i*eta and conj(eta) = i*xi, so each
    monomial swaps its exponent pair and gains i^degree."""
    if not f.is_complex:
        terms = {k: float(np.real(np.conj(c))) for k, c in f.terms.items()}
        return SeedPoly(f.n, terms, is_complex=False)
    terms = {}
    for key, c in f.terms.items():
        nk, _, _ = _mono_align(tuple((s, b, a) for s, a, b in key), f.n)
        terms[nk] = terms.get(nk, 0.0) + np.conj(c) * (1j ** _key_degree(key))
    return SeedPoly(f.n, terms, is_complex=True)


# ---------------------------------------------------------------------------
# linear circulant substitution

def linear_substitute(f, M, eps_trunc=0.0, M_y=None, return_report=False):
    """Substitute x_j <- sum_d row_d x_{j+d} with row = first row of the
    circulant M; y variables use M_y when given, else the same row. Row
    entries below eps_trunc in absolute value are dropped first and their
    l1 mass is reported (returned with the seed when return_report).
    """
    if f.is_complex:
        raise RepresentationError("linear_substitute works in the real chart")
    if M.n != f.n:
        raise ParameterError("circulant size %d does not match seed %d"
                             % (M.n, f.n))
    row_x = np.asarray(M.full_row(), dtype=np.float64)
    row_y = row_x if M_y is None else np.asarray(M_y.full_row(), np.float64)
    if M_y is not None and M_y.n != f.n:
        raise ParameterError("y-block circulant size mismatch")
    discarded = 0.0
    if eps_trunc > 0.0:
        for row in (row_x,) if M_y is None else (row_x, row_y):
            small = np.abs(row) < eps_trunc
            discarded += float(np.abs(row[small]).sum())
        row_x = np.where(np.abs(row_x) < eps_trunc, 0.0, row_x)
        row_y = np.where(np.abs(row_y) < eps_trunc, 0.0, row_y)
    n = f.n
    nzx = np.flatnonzero(row_x)
    nzy = np.flatnonzero(row_y)
    acc = {}
    for key, c in f.terms.items():
        partial = {(): c}
        for site, xe, ye in key:
            for _ in range(xe):
                partial = _mul_linear(partial, site, 0, nzx, row_x, n)
            for _ in range(ye):
                partial = _mul_linear(partial, site, 1, nzy, row_y, n)
        for frag, pc in partial.items():
            acc[frag] = acc.get(frag, 0.0) + pc
    amp = max(1.0, max(float(np.abs(row_x).sum()),
                       float(np.abs(row_y).sum())) ** max(f.degree, 1))
    eps = 1e-14 * f.norm * amp
    terms = {k: c for k, c in acc.items() if abs(c) > eps}
    out = SeedPoly(n, terms, is_complex=False)
    if return_report:
        return out, discarded
    return out


def _mul_linear(partial, site, which, nz, row, n):
    out = {}
    for frag, pc in partial.items():
        base = {s: [a, b] for s, a, b in frag}
        for d in nz:
            tgt = (site + int(d)) % n
            ent = base.get(tgt)
            cc = pc * row[d]
            if ent is None:
                newfrag = dict(base)
                newfrag[tgt] = [1, 0] if which == 0 else [0, 1]
            else:
                newfrag = {s: list(v) for s, v in base.items()}
                newfrag[tgt][which] += 1
            key = tuple((s, a, b) for s, (a, b) in sorted(newfrag.items()))
            out[key] = out.get(key, 0.0) + cc
    return out


# ---------------------------------------------------------------------------
# serialization

def save_seed(f, path):
    """Line-oriented text dump: header `N=`, `repr=`, then one term per
    line, `coeff site:xe:ye ...` (two coefficient fields for complex),
    17 significant digits, keys sorted."""
    lines = ["N=%d" % f.n, "repr=%s" % ("complex" if f.is_complex else "real")]
    for key in sorted(f.terms):
        c = f.terms[key]
        trip = " ".join("%d:%d:%d" % t for t in key)
        if f.is_complex:
            c = complex(c)
            head = "%.17g %.17g" % (c.real, c.imag)
        else:
            head = "%.17g" % float(c)
        lines.append(("%s %s" % (head, trip)) if trip else head)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_seed(path):
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if len(raw) < 2 or not raw[0].startswith("N=") or not raw[1].startswith("repr="):
        raise SerializationError("missing N=/repr= headers in %s" % path)
    try:
        n = int(raw[0][2:])
    except ValueError:
        raise SerializationError("bad lattice size header: %r" % raw[0])
    rep = raw[1][5:]
    if rep not in ("real", "complex"):
        raise SerializationError("unknown representation %r" % rep)
    is_complex = rep == "complex"
    ncoef = 2 if is_complex else 1
    terms = {}
    for ln in raw[2:]:
        parts = ln.split()
        if len(parts) < ncoef:
            raise SerializationError("malformed term line: %r" % ln)
        try:
            if is_complex:
                c = complex(float(parts[0]), float(parts[1]))
            else:
                c = float(parts[0])
            key = []
            for tok in parts[ncoef:]:
                s, a, b = tok.split(":")
                key.append((int(s), int(a), int(b)))
        except ValueError:
            raise SerializationError("malformed term line: %r" % ln)
        key = _canon_key(key, n)
        if key in terms:
            raise SerializationError("duplicate monomial in %s" % path)
        terms[key] = c
    return SeedPoly(n, terms, is_complex=is_complex)
