"""Exception and warning types shared across the toolkit."""


class SlowFastError(Exception):
    """Base class for all toolkit errors."""


class NonZeroMean(SlowFastError, ValueError):
    """A periodic antiderivative or inverse was requested for a field with nonzero mean."""


class SingularWeight(SlowFastError, ValueError):
    """A weight matrix field is not uniformly positive definite."""


class ModelError(SlowFastError, ValueError):
    """A model violates one of its invariants."""


class NoConvergence(SlowFastError, RuntimeError):
    """An iterative solve did not reach its tolerance."""


class VacuousDensity(SlowFastError, ValueError):
    """The angular mass of a fiber vanishes, so F(f)/Pi(f) is undefined."""


class DegenerateDirichletForm(SlowFastError, ValueError):
    """The Dirichlet form is singular off the span of G."""


class Unsolvable(SlowFastError, ValueError):
    """A cell problem right-hand side is not in the range of the operator."""


class EpsilonTooLarge(SlowFastError, ValueError):
    """The recovery sequence loses positivity at the requested epsilon."""


class StepUnstable(SlowFastError, RuntimeError):
    """Time integration blew up."""


class InsufficientSamples(SlowFastError, RuntimeError):
    """Statistical error bars exceed the requested tolerance."""


class ConfigError(SlowFastError, ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class NonContractive(UserWarning):
    """The equilibrium fixed-point map is not a contraction at the solution."""


class NonEquilibriumModel(UserWarning):
    """The angular force is not the gradient of a periodic potential."""


class DegenerateVelocity(UserWarning):
    """The derivatives of V do not span R^n."""


class DissipativityNotCertified(UserWarning):
    """The dissipativity margin is not positive; limit results are not certified."""
