"""Resonant normal form of the chain and its truncated invariant.

The quadratic Hamiltonian splits as H0 = H_Omega + Z0, where H_Omega is
the averaged-frequency harmonic part (whose homological operator acts
diagonally in the complex chart) and Z0 is a geometrically decaying
quadratic coupling that commutes with H_Omega. Generating functions are
produced order by order: assemble the known part Psi_s of the order-s
equation, split off the resonant piece as the new normal form term Z_s,
and invert the homological operator on the rest by a Neumann series in
K = L_Omega^{-1} L_{Z0}. The truncated invariant Phi^(r) is the partial
Lie transform of H_Omega, and its time derivative along the full flow
is carried by a single remainder seed rho of degree 2r+4.

Sign conventions are fixed structurally: the reconstruction identity
(transformed normal form equals the Hamiltonian order by order) is part
of the build diagnostics, so a flipped sign shows up as a failed
regression, not a silent drift.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .circulant import build_A, spectral_function
from .errors import (
    DegreeCapError,
    DivergenceError,
    ParameterError,
    ProjectionError,
    RepresentationError,
    SerializationError,
)
from .params import ChainParams
from .seeds import (
    DEG_CAP,
    SeedPoly,
    fit_decay,
    from_complex,
    linear_substitute,
    load_seed,
    poisson_seed,
    range_decompose,
    save_seed,
    to_complex,
)

__all__ = [
    "QuadraticNormalForm",
    "NormalFormResult",
    "build_quadratic_nf",
    "lie_omega",
    "project_kernel",
    "project_range",
    "invert_lie_omega",
    "invert_lie_H0",
    "build_normal_form",
    "invariant_evaluator",
    "InvariantObservable",
    "save_normal_form",
    "load_normal_form",
]

# relative l1 mass budget for pruning the scheme's intermediate seeds;
# four orders below every identity asserted on the results (1e-8
# residuals, 1e-10 kernel and reality checks), and the term counts stay
# bounded because the geometric tails are cut where they stop mattering
_PRUNE_REL = 1e-12


def _prune_mass(f, rel):
    """Drop the smallest coefficients whose combined l1 mass stays below
    rel * norm(f). Unlike a per-coefficient threshold this bounds the
    total perturbation, so it cannot silently eat a tolerance."""
    t = len(f.terms)
    if t == 0 or rel <= 0.0:
        return f
    keys = list(f.terms.keys())
    vals = np.abs(np.array([f.terms[k] for k in keys]))
    budget = rel * float(vals.sum())
    order = np.argsort(vals)
    cum = np.cumsum(vals[order])
    k = int(np.searchsorted(cum, budget, side="right"))
    if k == 0:
        return f
    dead = set(keys[int(i)] for i in order[:k])
    terms = {key: c for key, c in f.terms.items() if key not in dead}
    return SeedPoly(f.n, terms, is_complex=f.is_complex)


class QuadraticNormalForm:
    """The split of H0 in normal coordinates, plus the pushed quartic.

    Attributes
    ----------
    h_omega_seed : SeedPoly
        (Omega/2)(q0^2 + p0^2), the exactly solvable part.
    zeta0_seed : SeedPoly
        Quadratic coupling seed; extensivizes to H0 - H_Omega.
    Omega : float
        Diagonal entry of A^{1/2} (equals the mean of the square-rooted
        eigenvalues).
    decay_fit_zeta0 : DecayFit
        Fit of the zeta0 range profile at rate sigma0.
    h1_seed_q : SeedPoly
        The quartic perturbation written in normal coordinates, built
        lazily on first access via linear_substitute with the truncation
        threshold given at construction.
    decay_fit_h1 : DecayFit
        Fit of the h1 profile at rate sigma1, lazy as well.
    """

    def __init__(self, params, h_omega_seed, zeta0_seed, Omega,
                 decay_fit_zeta0, eps_trunc=1e-14):
        self.params = params
        self.h_omega_seed = h_omega_seed
        self.zeta0_seed = zeta0_seed
        self.Omega = float(Omega)
        self.decay_fit_zeta0 = decay_fit_zeta0
        self.eps_trunc = float(eps_trunc)
        self.h1_truncation_mass = 0.0
        self._h1 = None
        self._h1_fit = None
        self._zeta0_c = None

    @property
    def h1_seed_q(self):
        if self._h1 is None:
            self._build_h1()
        return self._h1

    @property
    def decay_fit_h1(self):
        if self._h1_fit is None:
            self._build_h1()
        return self._h1_fit

    def _build_h1(self):
        p = self.params
        A = build_A(p)
        down = spectral_function(A, lambda t: t ** -0.25)
        row_max = float(np.abs(down.full_row()).max())
        quart = SeedPoly.from_terms(p.N, [(((0, 4, 0),), 0.25)])
        h1, lost = linear_substitute(quart, down,
                                     eps_trunc=self.eps_trunc * row_max,
                                     return_report=True)
        self.h1_truncation_mass = lost
        self._h1 = h1
        self._h1_fit = fit_decay(range_decompose(h1), p.sigma1)

    def zeta0_complex(self):
        # cached: every Neumann iteration brackets against it
        if self._zeta0_c is None:
            self._zeta0_c = to_complex(self.zeta0_seed)
        return self._zeta0_c


def build_quadratic_nf(params, eps_trunc=1e-14):
    """Split H0 in normal coordinates and push the quartic through.

    eps_trunc is relative to the largest entry of the A^{-1/4} row; the
    l1 mass of the dropped entries is recorded on the result.
    """
    mu = getattr(params, "mu", None)
    if mu is None or mu >= 0.5:
        raise ParameterError(f"need mu < 1/2, got {mu}")
    N = params.N
    A = build_A(params)
    half_pow = spectral_function(A, np.sqrt)
    b = half_pow.half_row
    Omega = float(b[0])
    dust = 1e-14 * abs(Omega)
    terms = {}
    for m in range(1, N // 2 + 1):
        w = float(b[m])
        if N % 2 == 0 and m == N // 2:
            # the antipodal pair is hit twice by the cyclic sum
            w *= 0.5
        if abs(w) <= dust:
            continue
        terms[((0, 1, 0), (m, 1, 0))] = w
        terms[((0, 0, 1), (m, 0, 1))] = w
    zeta0 = SeedPoly(N, terms, is_complex=False)
    h_omega = SeedPoly.from_terms(
        N, [(((0, 2, 0),), Omega / 2.0), (((0, 0, 2),), Omega / 2.0)])
    z_fit = fit_decay(range_decompose(zeta0), params.sigma0)
    return QuadraticNormalForm(params, h_omega, zeta0, Omega, z_fit,
                               eps_trunc=eps_trunc)


# ---------------------------------------------------------------------------
# the diagonal operator and its projectors

def _balance(key):
    j = 0
    k = 0
    for _, a, b in key:
        j += a
        k += b
    return j, k


def lie_omega(f, Omega):
    """Bracket with the harmonic part: each complex monomial is an
    eigenvector with eigenvalue i*Omega*(eta degree - xi degree)."""
    if not f.is_complex:
        raise RepresentationError("lie_omega acts in the complex chart")
    terms = {}
    for key, c in f.terms.items():
        j, k = _balance(key)
        if k != j:
            terms[key] = c * (1j * Omega * (k - j))
    return SeedPoly(f.n, terms, is_complex=True)


def project_kernel(f):
    """Part of f commuting with H_Omega: monomials with equal xi and eta
    degree. Together with project_range this is an exact coefficient
    partition."""
    if not f.is_complex:
        raise RepresentationError("projectors act in the complex chart")
    terms = {k: c for k, c in f.terms.items()
             if _balance(k)[0] == _balance(k)[1]}
    meta = None
    if f.meta is not None:
        meta = {k: f.meta[k] for k in terms if k in f.meta}
    return SeedPoly(f.n, terms, is_complex=True, meta=meta)


def project_range(f):
    if not f.is_complex:
        raise RepresentationError("projectors act in the complex chart")
    terms = {k: c for k, c in f.terms.items()
             if _balance(k)[0] != _balance(k)[1]}
    meta = None
    if f.meta is not None:
        meta = {k: f.meta[k] for k in terms if k in f.meta}
    return SeedPoly(f.n, terms, is_complex=True, meta=meta)


def invert_lie_omega(g, Omega, kernel_tol=1e-10):
    """Divide each nonresonant coefficient by its eigenvalue.

    A resonant component above kernel_tol * norm(g) means the input is
    not invertible and raises; below that it is dropped as dust.
    """
    if not g.is_complex:
        raise RepresentationError("invert_lie_omega acts in the complex chart")
    gn = g.norm
    kern = 0.0
    terms = {}
    for key, c in g.terms.items():
        j, k = _balance(key)
        if k == j:
            kern += abs(c)
        else:
            terms[key] = c / (1j * Omega * (k - j))
    if kern > kernel_tol * gn:
        raise ProjectionError(
            "resonant component %.3e exceeds %.3e; input must lie in the "
            "range" % (kern, kernel_tol * gn))
    return SeedPoly(g.n, terms, is_complex=True)


def invert_lie_H0(g, nf, tol=1e-10, max_iter=64, return_info=False,
                  prune_rel=_PRUNE_REL):
    """Solve L_{H0} f = g by the Neumann series in K = L_Omega^{-1} L_{Z0}.

    Stops when the newest term norm falls below tol * norm(g); the
    measured first-iterate ratio stands in for the operator norm of K
    and must be below one. A divergent ratio, an exhausted iteration
    budget, or a failed a-posteriori residual all raise DivergenceError.
    Each Neumann term is pruned at prune_rel relative l1 mass.
    """
    if not g.is_complex:
        raise RepresentationError("invert_lie_H0 acts in the complex chart")
    gn = g.norm
    if gn == 0.0:
        out = SeedPoly.zero(g.n, is_complex=True)
        info = {"iterations": 0, "first_ratio": 0.0, "term_norms": [0.0],
                "residual_rel": 0.0}
        return (out, info) if return_info else out
    z0c = nf.zeta0_complex()
    term = invert_lie_omega(g, nf.Omega)
    f = term
    norms = [term.norm]
    first_ratio = 0.0
    iters = 0
    for l in range(1, max_iter + 1):
        if not z0c.terms or norms[-1] == 0.0:
            break
        term = -invert_lie_omega(poisson_seed(z0c, term), nf.Omega)
        term = _prune_mass(term, prune_rel)
        tn = term.norm
        ratio = tn / norms[-1]
        if l == 1:
            first_ratio = ratio
            if ratio >= 1.0:
                raise DivergenceError(
                    "Neumann series diverges: first-iterate ratio %.4f >= 1"
                    % ratio)
        norms.append(tn)
        f = f + term
        iters = l
        if tn <= tol * gn:
            break
    else:
        raise DivergenceError(
            "Neumann series did not reach tol %.1e within %d iterations "
            "(last ratio %.4f)" % (tol, max_iter, norms[-1] / norms[-2]))
    f = _prune_mass(f, prune_rel)
    resid = (lie_omega(f, nf.Omega) + poisson_seed(z0c, f) - g).norm
    if resid > 10.0 * tol * gn:
        raise DivergenceError(
            "a-posteriori residual %.3e exceeds %.3e" % (resid, 10 * tol * gn))
    if return_info:
        info = {"iterations": iters, "first_ratio": first_ratio,
                "term_norms": norms, "residual_rel": resid / gn}
        return f, info
    return f


# ---------------------------------------------------------------------------
# the order-by-order scheme

@dataclass
class NormalFormResult:
    """Everything the scheme produces at order r, stored in the real chart.

    chi[s-1] is the order-s generating function (degree 2s+2), Z runs
    Z0..Zr (Z0 is the quadratic coupling itself), Phi runs Phi0..Phir
    with Phi0 the harmonic seed, and rho is the degree 2r+4 remainder
    seed whose extensive function is the time derivative of Phi^(r)
    along the full flow.
    """

    r: int
    chi: list
    Z: list
    Phi: list
    rho: SeedPoly
    diagnostics: dict
    params: ChainParams = None
    Omega: float = 0.0

    def phi_truncated_seed(self):
        """Sum of Phi0..Phir as one mixed-degree seed."""
        total = self.Phi[0]
        for s in range(1, len(self.Phi)):
            total = total + self.Phi[s]
        return total


def build_normal_form(nf, r, tol=1e-10, prune_rel=_PRUNE_REL):
    """Run the homological recursion to order r.

    Order s: the known part Psi_s collects the cross terms of the
    transformed quadratic plus the transported lower normal form terms
    (minus the order-s part of H); its resonant projection, negated, is
    Z_s, and chi_s solves L_{H0} chi_s = Z_s + Psi_s through the Neumann
    inversion. The tableau of transported terms doubles as a regression:
    re-summing it must reproduce H order by order, which pins every sign
    in the scheme. Intermediate seeds are pruned at prune_rel relative
    l1 mass, four orders below the asserted identities.
    """
    r = int(r)
    if r < 0:
        raise ParameterError(f"order r must be >= 0, got {r}")
    if 2 * r + 4 > DEG_CAP:
        raise DegreeCapError(
            f"order {r} needs degree {2 * r + 4}, cap is {DEG_CAP}")
    p = nf.params
    n = p.N
    hO_c = to_complex(nf.h_omega_seed)
    z0_c = nf.zeta0_complex()
    h1_c = to_complex(nf.h1_seed_q)
    NF = {0: hO_c + z0_c}          # normal form terms, complex chart
    chi_c = {}                     # generating functions, complex chart
    tableau = {}                   # (l, m) -> E_m applied to NF[l]

    def transported(l, m):
        # E_m NF_l with the weighted recursion E_m = sum (j/m) L_chi_j E_{m-j}
        if (l, m) in tableau:
            return tableau[(l, m)]
        if m == 0:
            out = NF[l]
        else:
            out = SeedPoly.zero(n, is_complex=True)
            for j in range(1, m + 1):
                out = out + poisson_seed(chi_c[j], transported(l, m - j)) \
                    * (j / m)
            out = _prune_mass(out, prune_rel)
        tableau[(l, m)] = out
        return out

    orders = []
    k_est = 0.0
    for s in range(1, r + 1):
        psi = -h1_c if s == 1 else SeedPoly.zero(n, is_complex=True)
        for j in range(1, s):
            psi = psi + poisson_seed(chi_c[j], transported(0, s - j)) * (j / s)
        for l in range(1, s):
            psi = psi + transported(l, s - l)
        psi = _prune_mass(psi, prune_rel)
        z_s = -project_kernel(psi)
        rhs = project_range(psi)
        try:
            chi_s, ninfo = invert_lie_H0(rhs, nf, tol=tol, return_info=True,
                                         prune_rel=prune_rel)
        except DivergenceError as e:
            raise DivergenceError(f"order {s}: {e}") from e
        chi_c[s] = chi_s
        NF[s] = z_s
        tableau[(s, 0)] = z_s
        resid = (lie_omega(chi_s, nf.Omega) + poisson_seed(z0_c, chi_s)
                 - z_s - psi).norm
        k_est = max(k_est, ninfo["first_ratio"])
        orders.append({
            "order": s,
            "psi_norm": psi.norm,
            "chi_norm": chi_s.norm,
            "z_norm": z_s.norm,
            "residual_rel": resid / psi.norm if psi.norm else 0.0,
            "neumann_iterations": ninfo["iterations"],
            "neumann_first_ratio": ninfo["first_ratio"],
        })

    # reconstruction regression: the transported normal form re-sums to H
    for s in range(1, r + 1):
        total = SeedPoly.zero(n, is_complex=True)
        scale = 0.0
        for l in range(0, s + 1):
            ent = transported(l, s - l)
            scale = max(scale, ent.norm)
            total = total + ent
        if s == 1:
            total = total - h1_c
            scale = max(scale, h1_c.norm)
        orders[s - 1]["tchiz_defect"] = total.norm
        orders[s - 1]["tchiz_scale"] = scale

    # the invariant: partial Lie transform of the harmonic part
    phi_c = {0: hO_c}
    for m in range(1, r + 1):
        out = SeedPoly.zero(n, is_complex=True)
        for j in range(1, m + 1):
            out = out + poisson_seed(chi_c[j], phi_c[m - j]) * (j / m)
        phi_c[m] = _prune_mass(out, prune_rel)
    rho_c = poisson_seed(phi_c[r], h1_c)
    rho_c = _prune_mass(rho_c, prune_rel)

    chi_real = [from_complex(chi_c[s]) for s in range(1, r + 1)]
    z_real = [nf.zeta0_seed] + [from_complex(NF[s]) for s in range(1, r + 1)]
    phi_real = [nf.h_omega_seed if s == 0 else from_complex(phi_c[s])
                for s in range(0, r + 1)]
    rho = from_complex(rho_c)

    sig1 = p.sigma1
    sigs = p.sigma_star
    for s in range(1, r + 1):
        sigma_s = (s * sigs + (r - s) * sig1) / r
        od = orders[s - 1]
        od["sigma_s"] = sigma_s
        od["chi_decay_C"] = fit_decay(
            range_decompose(chi_real[s - 1]), sigma_s).C
        od["z_decay_C"] = fit_decay(
            range_decompose(z_real[s]), sigma_s).C

    diagnostics = {"tol": tol, "prune_rel": prune_rel,
                   "K_op_estimate": k_est, "orders": orders}
    return NormalFormResult(r=r, chi=chi_real, Z=z_real, Phi=phi_real,
                            rho=rho, diagnostics=diagnostics, params=p,
                            Omega=nf.Omega)


# ---------------------------------------------------------------------------
# evaluation in the original variables

class InvariantObservable:
    """Callable Phi(z) built from a NormalFormResult.

    The state is mapped to normal coordinates (the polynomial is never
    substituted through A^{1/4}, that would destroy sparsity) and the
    stored seeds are evaluated extensively. remainder gives the exact
    time derivative of Phi along the full flow.
    """

    def __init__(self, result, params):
        from .circulant import normal_coords_batch
        self._to_qp = normal_coords_batch
        self.params = params
        self.phi_seed = result.phi_truncated_seed()
        self.rho_seed = result.rho

    def _qp(self, X, Y):
        return self._to_qp(self.params, np.asarray(X, float),
                           np.asarray(Y, float))

    def __call__(self, z):
        x, y = (z.x, z.y) if hasattr(z, "x") else z
        return float(self.evaluate_batch(x[None, :], y[None, :])[0])

    def remainder(self, z):
        x, y = (z.x, z.y) if hasattr(z, "x") else z
        return float(self.remainder_batch(x[None, :], y[None, :])[0])

    def evaluate_batch(self, X, Y):
        from .seeds import extensive_eval_batch
        Q, P = self._qp(X, Y)
        return extensive_eval_batch(self.phi_seed, Q, P)

    def remainder_batch(self, X, Y):
        from .seeds import extensive_eval_batch
        Q, P = self._qp(X, Y)
        return extensive_eval_batch(self.rho_seed, Q, P)


def invariant_evaluator(result, params):
    """Observable form of the truncated invariant (and its remainder)."""
    return InvariantObservable(result, params)


# ---------------------------------------------------------------------------
# serialization: directory of seed files plus a key=value manifest

def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)

def save_normal_form(result, dirpath):
    os.makedirs(dirpath, exist_ok=True)
    p = result.params
    lines = [
        "N=%d" % p.N,
        "a=%.17g" % p.a,
        "beta=%.17g" % p.beta,
        "r=%d" % result.r,
        "Omega=%.17g" % result.Omega,
        "tol=%.17g" % result.diagnostics.get("tol", 0.0),
        "K_op_estimate=%.17g" % result.diagnostics.get("K_op_estimate", 0.0),
    ]
    for od in result.diagnostics.get("orders", []):
        s = od["order"]
        for key, val in sorted(od.items()):
            if key == "order":
                continue
            lines.append("order%d.%s=%s" % (s, key, _fmt(val)))
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for s, seed in enumerate(result.chi, start=1):
        save_seed(seed, os.path.join(dirpath, "chi_%d.seed" % s))
    for s, seed in enumerate(result.Z):
        save_seed(seed, os.path.join(dirpath, "z_%d.seed" % s))
    for s, seed in enumerate(result.Phi):
        save_seed(seed, os.path.join(dirpath, "phi_%d.seed" % s))
    save_seed(result.rho, os.path.join(dirpath, "rho.seed"))


def load_normal_form(dirpath):
    mpath = os.path.join(dirpath, "manifest.txt")
    if not os.path.exists(mpath):
        raise SerializationError(f"no manifest in {dirpath}")
    kv = {}
    with open(mpath) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise SerializationError(f"malformed manifest line: {line!r}")
            key, _, val = line.partition("=")
            kv[key] = val
    try:
        N = int(kv["N"])
        a = float(kv["a"])
        beta = float(kv["beta"])
        r = int(kv["r"])
        Omega = float(kv["Omega"])
    except (KeyError, ValueError) as e:
        raise SerializationError(f"manifest missing or bad field: {e}") from e
    params = ChainParams(N=N, a=a, beta=beta)
    orders = []
    for s in range(1, r + 1):
        pre = "order%d." % s
        od = {"order": s}
        for key, val in kv.items():
            if key.startswith(pre):
                name = key[len(pre):]
                od[name] = int(val) if name == "neumann_iterations" \
                    else float(val)
        orders.append(od)
    diagnostics = {"tol": float(kv.get("tol", 0.0)),
                   "K_op_estimate": float(kv.get("K_op_estimate", 0.0)),
                   "orders": orders}
    chi = [load_seed(os.path.join(dirpath, "chi_%d.seed" % s))
           for s in range(1, r + 1)]
    Z = [load_seed(os.path.join(dirpath, "z_%d.seed" % s))
         for s in range(r + 1)]
    Phi = [load_seed(os.path.join(dirpath, "phi_%d.seed" % s))
           for s in range(r + 1)]
    rho = load_seed(os.path.join(dirpath, "rho.seed"))
    return NormalFormResult(r=r, chi=chi, Z=Z, Phi=Phi, rho=rho,
                            diagnostics=diagnostics, params=params,
                            Omega=Omega)
