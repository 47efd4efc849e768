"""Exception types raised by the library."""


class AdelimError(Exception):
    """Base class for all library-specific errors."""


class NonDiagonalizable(AdelimError):
    """Right-eigenvector matrix is numerically singular (Jordan-like input)."""


class InsufficientSamples(AdelimError):
    """Too few usable samples inside the fit window."""


class DimensionMismatch(AdelimError):
    """Operator/vector shapes are inconsistent."""


class NonHermitianH(AdelimError):
    """Hamiltonian fails the Hermiticity check."""


class NoGap(AdelimError):
    """Spectrum cannot be split cleanly into surviving and fast modes."""


class AmbiguousMatching(AdelimError):
    """Perturbed modes cannot be assigned uniquely to unperturbed ones."""


class SingularA(AdelimError):
    """The surviving-block matrix A(t) is numerically singular."""


class SingularN(AdelimError):
    """The surviving-mode overlap matrix N (or M) is numerically singular."""


class SingularFastBlock(AdelimError):
    """The fast-subspace block of the generator cannot be inverted."""


class DegenerateDenominator(AdelimError):
    """A required surviving-fast eigenvalue difference vanishes."""


class NonzeroSurvivingEigenvalue(AdelimError):
    """Recursion branch requires all surviving eigenvalues to be zero."""


class InvalidParams(AdelimError):
    """Model parameters violate their constraints."""
