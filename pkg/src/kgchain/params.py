"""Chain parameters and the Klein-Gordon Hamiltonian.

The model is the periodic quartic Klein-Gordon chain

    H(x, y) = 1/2 sum_j [ y_j^2 + x_j^2 + a (x_j - x_{j-1})^2 + x_j^4 / 2 ]

with sites labelled 0..N-1 and index arithmetic mod N.  Everything
downstream (circulant algebra, normal form, sampling) hangs off the
few derived constants collected in :class:`ChainParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "ChainParams",
    "PhaseState",
    "hamiltonian",
    "hamiltonian_parts",
    "specific_energy_target",
]


@dataclass(frozen=True)
class PhaseState:
    """A point (x, y) in phase space; both arrays have length N."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
            raise DimensionError("x and y must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ParameterError("phase-space state must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ChainParams:
    """Model parameters with eagerly derived constants.

    Parameters
    ----------
    N : number of lattice sites, at least 4.
    a : coupling strength, a >= 0.
    beta : inverse temperature, beta > 0.

    Derived (frozen at construction):
    omega2 = 1 + 2a, omega = sqrt(omega2), mu = a / omega2,
    Omega = mean of the square roots of the eigenvalues of the coupling
    matrix A, and the decay-rate ladder sigma0 = -ln(2 mu),
    sigma1 = sigma0 / 2, sigma_star = sigma0 / 4 (all +inf at a = 0).
    """

    N: int
    a: float
    beta: float
    omega2: float = field(init=False)
    omega: float = field(init=False)
    mu: float = field(init=False)
    Omega: float = field(init=False)
    sigma0: float = field(init=False)
    sigma1: float = field(init=False)
    sigma_star: float = field(init=False)

    def __post_init__(self):
        N = int(self.N)
        a = float(self.a)
        beta = float(self.beta)
        if N < 4:
            raise ParameterError(f"N must be >= 4, got {N}")
        if not math.isfinite(a) or a < 0.0:
            raise ParameterError(f"coupling a must be finite and >= 0, got {a}")
        if not math.isfinite(beta) or beta <= 0.0:
            raise ParameterError(f"beta must be finite and > 0, got {beta}")
        omega2 = 1.0 + 2.0 * a
        mu = a / omega2
        if mu >= 0.5:
            raise ParameterError(f"mu = a/(1+2a) must be < 1/2, got {mu}")
        # Dispersion relation of A; Omega is the arithmetic mean of its
        # square-rooted eigenvalues (the self-consistency with the circulant
        # module is a test, not a runtime dependency).
        k = np.arange(N)
        lam = omega2 - 2.0 * a * np.cos(2.0 * np.pi * k / N)
        Omega = float(np.mean(np.sqrt(lam)))
        sigma0 = math.inf if a == 0.0 else -math.log(2.0 * mu)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "omega2", omega2)
        object.__setattr__(self, "omega", math.sqrt(omega2))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "sigma0", sigma0)
        object.__setattr__(self, "sigma1", sigma0 / 2.0)
        object.__setattr__(self, "sigma_star", sigma0 / 4.0)


def _check_state(params: ChainParams, z: PhaseState) -> None:
    if z.n != params.N:
        raise DimensionError(f"state length {z.n} != N = {params.N}")


def hamiltonian(params: ChainParams, z: PhaseState) -> float:
    """Total energy H(x, y) with periodic wraparound."""
    _check_state(params, z)
    x, y = z.x, z.y
    dx = x - np.roll(x, 1)  # x_j - x_{j-1}
    return float(0.5 * np.sum(y * y + x * x + params.a * dx * dx + 0.5 * x**4))


def hamiltonian_parts(params: ChainParams, z: PhaseState) -> tuple[float, float]:
    """(H0, H1): quadratic part and the on-site quartic sum x_j^4 / 4."""
    _check_state(params, z)
    x, y = z.x, z.y
    dx = x - np.roll(x, 1)
    h0 = float(0.5 * np.sum(y * y + x * x + params.a * dx * dx))
    h1 = float(0.25 * np.sum(x**4))
    return h0, h1


def specific_energy_target(params: ChainParams) -> float:
    """Expected specific energy <H>/N at large beta, namely 1/beta."""
    return 1.0 / params.beta
