"""Exception types shared across the package.

The CLI maps these onto process exit codes: input and feasibility
problems exit 2, solver non-convergence exits 3.
"""


class Error(Exception):
    """Base class for all package errors."""


class ConfigError(Error):
    """Malformed or unreadable problem configuration."""


class ParameterError(Error, ValueError):
    """A parameter violates its admissible range."""


class InfeasibleProblem(Error):
    """No admissible strategy exists for any initial wealth (k >= r with l > 0)."""


class InfeasibleWealth(Error):
    """Initial wealth below the sustainable floor x_e."""


class KappaNonPositive(Error):
    """kappa <= 0: the optimal value may be infinite, nothing to compute."""


class UnsupportedCase(Error):
    """Operation not defined for this problem case."""


class NotHomogeneousCase(UnsupportedCase):
    """Closed form requires l = 0."""


class NotStateIndependentCase(UnsupportedCase):
    """Closed form requires k = 0, l > 0."""


class DomainError(Error, ValueError):
    """Function evaluated outside its mathematical domain."""


class NoConvergence(Error):
    """Newton iteration stalled before reaching tolerance."""


class ConvexityLoss(Error):
    """Computed dual solution is not strictly convex / monotone where it must be.

    Usually indicates a domain truncation that is too tight for the
    requested parameters.
    """


class OutOfRange(Error):
    """Query outside the tabulated range; extrapolation is refused."""


class PolicyInadmissible(Error):
    """A feedback policy returned consumption below the floor k*x + l."""


class NumericalBlowup(Error):
    """Non-finite state encountered during simulation."""
