"""Adiabatic invariants for the periodic Klein-Gordon chain.

A small toolkit with two halves: a perturbative construction of an
extensive approximate invariant for the chain (seed polynomials on the
cyclic lattice, normal coordinates, Lie-transform recursion), and the
statistical machinery to test how well that invariant is conserved
along Hamiltonian orbits compared against its Gibbs-measure variance.
"""

from .params import ChainParams, PhaseState, hamiltonian, hamiltonian_parts, specific_energy_target
from .circulant import (
    CirculantSymmetric,
    Spectrum,
    build_A,
    spectrum,
    spectral_function,
    apply,
    to_normal_coords,
    from_normal_coords,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
