"""Error hierarchy shared by every package; each family maps to a CLI exit code."""


class AffineCriticalError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationFailure(AffineCriticalError):
    """The input law, configuration or function fails a declared condition."""

    exit_code = 2


class NonCritical(ValidationFailure):
    """E[log A] differs from zero."""


class Degenerate(ValidationFailure):
    """A is a.s. 1 or the recursion has an a.s. fixed point."""


class MomentFailure(ValidationFailure):
    """The (2+eps) logarithmic moments or the small moments are not finite."""


class ConfigError(ValidationFailure):
    """The run configuration cannot be parsed or is inconsistent."""


class ConfigNotCoveredByG(ValidationFailure):
    """A check needing a positive invariant half-space was requested without one."""


class DepthOverflow(ValidationFailure):
    """Exact enumeration depth exceeds the supported maximum."""


class NotInClass(ValidationFailure):
    """The function is not in the class F(mu_bar): the off-origin bound diverges."""


class LatticeZeroMismatch(ValidationFailure):
    """psi_hat does not vanish at a zero of 1 - mu_hat for a lattice law."""


class NumericalFailure(AffineCriticalError):
    """A numerical procedure did not reach its tolerance."""

    exit_code = 3


class QuadratureFailure(NumericalFailure):
    """Adaptive quadrature exceeded its panel budget or tolerance."""


class ExtrapolationDivergence(NumericalFailure):
    """Richardson extrapolation in lambda did not settle."""


class Truncated(NumericalFailure):
    """A ladder excursion did not terminate within n_max steps."""


class NoPlateau(NumericalFailure):
    """The estimated f_phi drifts on the plateau window."""


class InconsistentEstimates(NumericalFailure):
    """Independent estimators of the same constant disagree beyond tolerance."""


class InsufficientSupport(AffineCriticalError):
    """Too few sample points in the requested region."""

    exit_code = 4
