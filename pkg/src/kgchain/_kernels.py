"""Hot loops behind the seed algebra.

Two kernels live here: the Poisson-bracket product enumeration (emits
raw product monomials into chunk buffers; dedup happens outside with a
numpy sort-reduce) and the batched extensive evaluator. Everything has
a pure-python/numpy fallback so the package still works, slowly, if
numba is unavailable; the fallbacks double as oracles in the tests.

Packed monomial layout, fixed for N <= 63 and degree <= 16:
a term is up to 16 (site, xe, ye) triples, each packed into 16 bits
as (site << 10) | (xe << 5) | ye, stored site-sorted and padded with
zeros; four triples per int64 word, word 0 holds triples 0..3 in the
high-to-low 16-bit fields. The four words give a canonical sort key.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - the mirror always has numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range

MAX_TRIPLES = 16


def _bracket_core(sites_f, xe_f, ye_f, kk_f, ell_f, cre_f, cim_f,
                  sites_g, xe_g, ye_g, kk_g, ell_g, cre_g, cim_g,
                  n, tau_pair, i0, j0,
                  out_w, out_nu, out_re, out_im):
    """Emit bracket products for term pairs starting at (i0, j0).

    Returns (i_next, j_next, count): the pair to resume at (i_next == -1
    when done) and how many rows of the out buffers were filled. Both
    inputs must be sorted by descending |coeff| so the tau_pair cutoff
    can break the loops early.
    """
    cap = out_w.shape[0] - 4096  # worst-case emissions for one pair
    pos = 0
    Tf = cre_f.shape[0]
    Tg = cre_g.shape[0]
    s1 = np.empty(MAX_TRIPLES, dtype=np.int64)
    x1 = np.empty(MAX_TRIPLES, dtype=np.int64)
    y1 = np.empty(MAX_TRIPLES, dtype=np.int64)
    ms = np.empty(2 * MAX_TRIPLES, dtype=np.int64)
    mx = np.empty(2 * MAX_TRIPLES, dtype=np.int64)
    my = np.empty(2 * MAX_TRIPLES, dtype=np.int64)
    for i in range(i0, Tf):
        af_i = cre_f[i] * cre_f[i] + cim_f[i] * cim_f[i]
        jstart = j0 if i == i0 else 0
        done_inner = False
        for j in range(jstart, Tg):
            ag = cre_g[j] * cre_g[j] + cim_g[j] * cim_g[j]
            if af_i * ag < tau_pair * tau_pair:
                if j == 0:
                    done_inner = True
                break
            if pos >= cap:
                return i, j, pos
            m = ell_f[i]
            mp = ell_g[j]
            kf = kk_f[i]
            kg = kk_g[j]
            c_re = cre_f[i] * cre_g[j] - cim_f[i] * cim_g[j]
            c_im = cre_f[i] * cim_g[j] + cim_f[i] * cre_g[j]
            if m + mp <= n - 2:
                # triangle regime: family A shifts f by s = 0..mp,
                # family B shifts g by s = 1..m; every relative offset
                # in [-mp, m] is hit exactly once
                for s in range(mp + 1):
                    for u in range(kf):
                        s1[u] = sites_f[i, u] + s
                        x1[u] = xe_f[i, u]
                        y1[u] = ye_f[i, u]
                    nu = mp if mp > m + s else m + s
                    pos = _emit_products(
                        s1, x1, y1, kf, sites_g[j], xe_g[j], ye_g[j], kg,
                        c_re, c_im, n, nu, ms, mx, my,
                        out_w, out_nu, out_re, out_im, pos)
                for s in range(1, m + 1):
                    for u in range(kf):
                        s1[u] = sites_f[i, u]
                        x1[u] = xe_f[i, u]
                        y1[u] = ye_f[i, u]
                    nu = m if m > mp + s else mp + s
                    pos = _emit_products_shiftg(
                        s1, x1, y1, kf, sites_g[j], xe_g[j], ye_g[j], kg, s,
                        c_re, c_im, n, nu, ms, mx, my,
                        out_w, out_nu, out_re, out_im, pos)
            else:
                # wrap regime: all N relative shifts, each exactly once;
                # the range class is the product's own ell, clamped later
                for u in range(kf):
                    s1[u] = sites_f[i, u]
                    x1[u] = xe_f[i, u]
                    y1[u] = ye_f[i, u]
                for s in range(n):
                    pos = _emit_products_shiftg(
                        s1, x1, y1, kf, sites_g[j], xe_g[j], ye_g[j], kg, s,
                        c_re, c_im, n, -1, ms, mx, my,
                        out_w, out_nu, out_re, out_im, pos)
        if done_inner:
            break
    return -1, 0, pos


def _emit_products(s1, x1, y1, k1, s2row, x2row, y2row, k2,
                   c_re, c_im, n, nu, ms, mx, my,
                   out_w, out_nu, out_re, out_im, pos):
    """Products of d/dx d/dy pairings between term 1 (site lists s1 mod n)
    and term 2 (rows of the packed table). Term-1 sites may exceed n-1
    (shifted); they are reduced here."""
    for u in range(k1):
        cu = s1[u] % n
        for v in range(k2):
            if s2row[v] == cu:
                if x1[u] > 0 and y2row[v] > 0:
                    w = c_re * x1[u] * y2row[v]
                    wi = c_im * x1[u] * y2row[v]
                    pos = _emit_one(s1, x1, y1, k1, s2row, x2row, y2row, k2,
                                    0, u, v, w, wi, n, nu, ms, mx, my,
                                    out_w, out_nu, out_re, out_im, pos)
                if y1[u] > 0 and x2row[v] > 0:
                    w = -c_re * y1[u] * x2row[v]
                    wi = -c_im * y1[u] * x2row[v]
                    pos = _emit_one(s1, x1, y1, k1, s2row, x2row, y2row, k2,
                                    1, u, v, w, wi, n, nu, ms, mx, my,
                                    out_w, out_nu, out_re, out_im, pos)
    return pos


def _emit_products_shiftg(s1, x1, y1, k1, s2row, x2row, y2row, k2, sg,
                          c_re, c_im, n, nu, ms, mx, my,
                          out_w, out_nu, out_re, out_im, pos):
    """Same as _emit_products but with term 2 shifted by sg."""
    for u in range(k1):
        cu = s1[u] % n
        for v in range(k2):
            if (s2row[v] + sg) % n == cu:
                if x1[u] > 0 and y2row[v] > 0:
                    w = c_re * x1[u] * y2row[v]
                    wi = c_im * x1[u] * y2row[v]
                    pos = _emit_one_sg(s1, x1, y1, k1, s2row, x2row, y2row, k2, sg,
                                       0, u, v, w, wi, n, nu, ms, mx, my,
                                       out_w, out_nu, out_re, out_im, pos)
                if y1[u] > 0 and x2row[v] > 0:
                    w = -c_re * y1[u] * x2row[v]
                    wi = -c_im * y1[u] * x2row[v]
                    pos = _emit_one_sg(s1, x1, y1, k1, s2row, x2row, y2row, k2, sg,
                                       1, u, v, w, wi, n, nu, ms, mx, my,
                                       out_w, out_nu, out_re, out_im, pos)
    return pos


def _emit_one(s1, x1, y1, k1, s2row, x2row, y2row, k2,
              which, u, v, w, wi, n, nu, ms, mx, my,
              out_w, out_nu, out_re, out_im, pos):
    kk = 0
    for t in range(k1):
        ms[kk] = s1[t] % n
        mx[kk] = x1[t]
        my[kk] = y1[t]
        if t == u:
            if which == 0:
                mx[kk] -= 1
            else:
                my[kk] -= 1
        kk += 1
    for t in range(k2):
        ms[kk] = s2row[t]
        mx[kk] = x2row[t]
        my[kk] = y2row[t]
        if t == v:
            if which == 0:
                my[kk] -= 1
            else:
                mx[kk] -= 1
        kk += 1
    return _pack_and_store(ms, mx, my, kk, w, wi, n, nu,
                           out_w, out_nu, out_re, out_im, pos)


def _emit_one_sg(s1, x1, y1, k1, s2row, x2row, y2row, k2, sg,
                 which, u, v, w, wi, n, nu, ms, mx, my,
                 out_w, out_nu, out_re, out_im, pos):
    kk = 0
    for t in range(k1):
        ms[kk] = s1[t] % n
        mx[kk] = x1[t]
        my[kk] = y1[t]
        if t == u:
            if which == 0:
                mx[kk] -= 1
            else:
                my[kk] -= 1
        kk += 1
    for t in range(k2):
        ms[kk] = (s2row[t] + sg) % n
        mx[kk] = x2row[t]
        my[kk] = y2row[t]
        if t == v:
            if which == 0:
                my[kk] -= 1
            else:
                mx[kk] -= 1
        kk += 1
    return _pack_and_store(ms, mx, my, kk, w, wi, n, nu,
                           out_w, out_nu, out_re, out_im, pos)


def _pack_and_store(ms, mx, my, kk, w, wi, n, nu,
                    out_w, out_nu, out_re, out_im, pos):
    """Merge duplicate sites, drop zero triples, left-align, pack, store."""
    # merge triples sharing a site (insertion sort by site first)
    for a in range(1, kk):
        sa = ms[a]
        xa = mx[a]
        ya = my[a]
        b = a - 1
        while b >= 0 and ms[b] > sa:
            ms[b + 1] = ms[b]
            mx[b + 1] = mx[b]
            my[b + 1] = my[b]
            b -= 1
        ms[b + 1] = sa
        mx[b + 1] = xa
        my[b + 1] = ya
    out_k = 0
    a = 0
    while a < kk:
        site = ms[a]
        sx = mx[a]
        sy = my[a]
        b = a + 1
        while b < kk and ms[b] == site:
            sx += mx[b]
            sy += my[b]
            b += 1
        if sx > 0 or sy > 0:
            ms[out_k] = site
            mx[out_k] = sx
            my[out_k] = sy
            out_k += 1
        a = b
    if out_k == 0:
        # constant term (degree-1 factors bracket to degree 0)
        out_w[pos, 0] = 0
        out_w[pos, 1] = 0
        out_w[pos, 2] = 0
        out_w[pos, 3] = 0
        out_nu[pos] = nu if nu >= 0 else 0
        out_re[pos] = w
        out_im[pos] = wi
        return pos + 1
    # minimal covering diameter: find the largest circular gap
    best_gap = -1
    for a in range(out_k):
        nxt = ms[a + 1] if a + 1 < out_k else ms[0] + n
        gap = nxt - ms[a] - 1
        if gap > best_gap:
            best_gap = gap
    # among tied cuts pick the lexicographically smallest rotation, so
    # the canonical key depends only on the shift orbit
    best_start = -1
    for a in range(out_k):
        nxt = ms[a + 1] if a + 1 < out_k else ms[0] + n
        if nxt - ms[a] - 1 != best_gap:
            continue
        si = (a + 1) % out_k
        if best_start < 0:
            best_start = si
            continue
        better = False
        for idx in range(out_k):
            ia = (si + idx) % out_k
            ib = (best_start + idx) % out_k
            da = ms[ia] - ms[si]
            if da < 0:
                da += n
            db = ms[ib] - ms[best_start]
            if db < 0:
                db += n
            if da != db:
                better = da < db
                break
            if mx[ia] != mx[ib]:
                better = mx[ia] < mx[ib]
                break
            if my[ia] != my[ib]:
                better = my[ia] < my[ib]
                break
        if better:
            best_start = si
    start = ms[best_start]
    ell = n - 1 - best_gap
    myn = nu
    if myn < 0:
        myn = ell if ell < n // 2 else n // 2
    # rotate so the support starts at 0, keeping site order
    w0 = np.int64(0)
    w1 = np.int64(0)
    w2 = np.int64(0)
    w3 = np.int64(0)
    for idx in range(out_k):
        a = (best_start + idx) % out_k
        site = ms[a] - start
        if site < 0:
            site += n
        trip = np.int64((site << 10) | (mx[a] << 5) | my[a])
        word = idx >> 2
        shift = (3 - (idx & 3)) << 4
        if word == 0:
            w0 |= trip << shift
        elif word == 1:
            w1 |= trip << shift
        elif word == 2:
            w2 |= trip << shift
        else:
            w3 |= trip << shift
    out_w[pos, 0] = w0
    out_w[pos, 1] = w1
    out_w[pos, 2] = w2
    out_w[pos, 3] = w3
    out_nu[pos] = myn
    out_re[pos] = w
    out_im[pos] = wi
    return pos + 1


def _eval_real_core(sites, xe, ye, kk, coeffs, XT, YT, out):
    T = coeffs.shape[0]
    n = XT.shape[0]
    M = XT.shape[1]
    for m in prange(M):
        acc = 0.0
        for t in range(T):
            c = coeffs[t]
            for s in range(n):
                p = c
                for u in range(kk[t]):
                    col = sites[t, u] + s
                    if col >= n:
                        col -= n
                    e = xe[t, u]
                    v = XT[col, m]
                    while e > 0:
                        p *= v
                        e -= 1
                    e = ye[t, u]
                    v = YT[col, m]
                    while e > 0:
                        p *= v
                        e -= 1
                acc += p
        out[m] = acc


def _eval_complex_core(sites, xe, ye, kk, coeffs, XT, YT, out):
    T = coeffs.shape[0]
    n = XT.shape[0]
    M = XT.shape[1]
    for m in prange(M):
        acc = 0.0 + 0.0j
        for t in range(T):
            c = coeffs[t]
            for s in range(n):
                p = c
                for u in range(kk[t]):
                    col = sites[t, u] + s
                    if col >= n:
                        col -= n
                    e = xe[t, u]
                    v = XT[col, m]
                    while e > 0:
                        p *= v
                        e -= 1
                    e = ye[t, u]
                    v = YT[col, m]
                    while e > 0:
                        p *= v
                        e -= 1
                acc += p
        out[m] = acc


if HAVE_NUMBA:
    _emit_one = njit(cache=True, inline="always")(_emit_one)
    _emit_one_sg = njit(cache=True, inline="always")(_emit_one_sg)
    _pack_and_store = njit(cache=True, inline="always")(_pack_and_store)
    _emit_products = njit(cache=True)(_emit_products)
    _emit_products_shiftg = njit(cache=True)(_emit_products_shiftg)
    bracket_core = njit(cache=True)(_bracket_core)
    eval_real_core = njit(cache=True, parallel=True, fastmath=True)(_eval_real_core)
    eval_complex_core = njit(cache=True, parallel=True)(_eval_complex_core)
else:  # pragma: no cover
    bracket_core = _bracket_core
    eval_real_core = _eval_real_core
    eval_complex_core = _eval_complex_core
