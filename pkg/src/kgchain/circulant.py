"""Symmetric circulant matrices and the normal-coordinate map.

The coupling matrix A = (1+2a) I - a (S + S^{-1}) of the chain is a
symmetric circulant, so are all its spectral functions (powers, log).
We store only the half row (row[0..N//2]) since row[j] = row[N-j], and
do all the work through the real DFT.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, SpectralDomainError
from .params import ChainParams, PhaseState

__all__ = [
    "CirculantSymmetric",
    "Spectrum",
    "build_A",
    "spectrum",
    "spectral_function",
    "apply",
    "to_normal_coords",
    "from_normal_coords",
]

_EIGMIN_GUARD = 1e-12


@dataclass(frozen=True)
class CirculantSymmetric:
    """Half-row storage of a symmetric circulant: row[j] for j = 0..N//2."""

    n: int
    half_row: np.ndarray

    def __post_init__(self):
        hr = np.asarray(self.half_row, dtype=float)
        if self.n < 4:
            raise DimensionError(f"N must be >= 4, got {self.n}")
        if hr.ndim != 1 or hr.shape[0] != self.n // 2 + 1:
            raise DimensionError(
                f"half_row must have length N//2+1 = {self.n // 2 + 1}, got {hr.shape}"
            )
        hr = hr.copy()
        hr.setflags(write=False)
        object.__setattr__(self, "half_row", hr)

    def full_row(self) -> np.ndarray:
        """Row 0 of the matrix, length N, with row[j] = row[N-j]."""
        n = self.n
        j = np.arange(n)
        return self.half_row[np.minimum(j, n - j)]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in DFT order: lam[k] = sum_j row[j] cos(2 pi j k / N)."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float).copy()
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)


def build_A(params: ChainParams) -> CirculantSymmetric:
    """Coupling matrix of the chain: row (1+2a, -a, 0, ..., 0, -a)."""
    hr = np.zeros(params.N // 2 + 1)
    hr[0] = params.omega2
    hr[1] = -params.a
    return CirculantSymmetric(params.N, hr)


def spectrum(M: CirculantSymmetric) -> Spectrum:
    """All N eigenvalues of M, k-ordered (not sorted)."""
    lam = np.fft.fft(M.full_row())
    # symmetric row -> real spectrum; the imaginary dust is pure roundoff
    return Spectrum(lam.real)


def spectral_function(M: CirculantSymmetric, f) -> CirculantSymmetric:
    """The circulant f(M), computed eigenvalue-wise through the DFT.

    Raises SpectralDomainError when an eigenvalue is below 1e-12; every use
    in this package (sqrt, fourth roots and their inverses, log) needs a
    spectrum safely away from zero.
    """
    lam = spectrum(M).eigenvalues
    if lam.min() <= _EIGMIN_GUARD:
        raise SpectralDomainError(
            f"minimum eigenvalue {lam.min():.3e} too close to zero for a spectral function"
        )
    row = np.fft.ifft(f(lam)).real
    return CirculantSymmetric(M.n, row[: M.n // 2 + 1])


def apply(M: CirculantSymmetric, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product M v along the last axis (batched ok)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != M.n:
        raise DimensionError(f"vector length {v.shape[-1]} != N = {M.n}")
    lam = np.fft.fft(M.full_row())
    return np.fft.ifft(np.fft.fft(v, axis=-1) * lam, axis=-1).real


@lru_cache(maxsize=32)
def _quarter_roots(N: int, a: float):
    """(A^{1/4}, A^{-1/4}) rows for the given chain, cached."""
    from .params import ChainParams  # local to keep the cache key primitive

    p = ChainParams(N=N, a=a, beta=1.0)
    A = build_A(p)
    up = spectral_function(A, lambda t: t**0.25)
    down = spectral_function(A, lambda t: t**-0.25)
    return up, down


def to_normal_coords(params: ChainParams, z: PhaseState) -> PhaseState:
    """(x, y) -> (q, p) = (A^{1/4} x, A^{-1/4} y)."""
    up, down = _quarter_roots(params.N, params.a)
    return PhaseState(apply(up, z.x), apply(down, z.y))


def from_normal_coords(params: ChainParams, z: PhaseState) -> PhaseState:
    """(q, p) -> (x, y) = (A^{-1/4} q, A^{1/4} p)."""
    up, down = _quarter_roots(params.N, params.a)
    return PhaseState(apply(down, z.x), apply(up, z.y))


def normal_coords_batch(params: ChainParams, X: np.ndarray, Y: np.ndarray):
    """Batched (M, N) version of to_normal_coords, returning (Q, P) arrays."""
    up, down = _quarter_roots(params.N, params.a)
    return apply(up, X), apply(down, Y)
