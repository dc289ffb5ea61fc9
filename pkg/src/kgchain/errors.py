"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Model parameters outside the admissible region."""


class DimensionError(ValueError):
    """State or vector length does not match the chain size."""


class RepresentationError(ValueError):
    """Seed is in the wrong representation (real vs complex) for the operation."""


class ProjectionError(ValueError):
    """Input has a component outside the operator's domain (e.g. a kernel part
    where only range elements are invertible)."""


class DegreeCapError(OverflowError):
    """Polynomial degree exceeded the hard cap."""


class TermBudgetError(OverflowError):
    """An algebraic operation produced more terms than the configured guard."""


class DivergenceError(ArithmeticError):
    """Neumann iteration did not contract.

    Carries the measured first-iterate ratio and, when raised while building a
    normal form, the order index at which it happened.
    """

    def __init__(self, msg, ratio=None, order=None):
        super().__init__(msg)
        self.ratio = ratio
        self.order = order


class SpectralDomainError(ValueError):
    """Spectral function evaluated on an eigenvalue too close to zero."""


class BlowUpError(ArithmeticError):
    """Integrator hit a non-finite state; carries the step index."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class SerializationError(ValueError):
    """Malformed seed file or manifest."""


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration key/value."""
