"""Exception hierarchy shared across the package.

Two broad categories matter to the CLI: configuration problems (bad files,
bad parameters -> exit status 2) and domain guards tripping during a run
(densities outside the physical domain, shock time exceeded, loss of strict
hyperbolicity -> exit status 3).
"""


class BifluxError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BifluxError):
    """Bad input files or parameters; the run never started."""


class ParseError(ConfigurationError):
    """A model-spec or experiment file could not be parsed."""


class SpecInvariantError(ConfigurationError):
    """A model spec violates a structural invariant (names the field)."""


class SizeLimitError(ConfigurationError):
    """An exhaustive check or exact computation would exceed its size cap."""


class InfeasibleSupportError(BifluxError):
    """Rate synthesis found only the zero solution on the given support."""


class ConvergenceError(BifluxError):
    """An iterative numeric routine failed its accuracy contract."""


class GuardError(BifluxError):
    """A runtime domain guard refused to continue."""


class DomainError(GuardError):
    """Density pair outside (or on the boundary of) the physical domain."""


class DegenerateDomainError(GuardError):
    """All (zeta, eta) points collinear; no two-dimensional domain."""


class HyperbolicityError(GuardError):
    """Flux Jacobian lacks two distinct real eigenvalues."""


class ShockTimeError(GuardError):
    """Requested time is beyond the estimated smooth (pre-shock) regime."""


class SectorError(BifluxError):
    """Empty or reducible conservation sector."""


class SupportViolationError(BifluxError):
    """Relative entropy undefined: mu puts mass where nu has none."""
