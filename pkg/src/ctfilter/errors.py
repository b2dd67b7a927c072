"""Exception hierarchy shared by all filtering components."""


class FilterError(Exception):
    """Base class for every error raised by ctfilter."""


class ModelError(FilterError, ValueError):
    """Invalid model, density, or catalog entry."""


class SimulationDiverged(FilterError):
    """A simulated state or particle became non-finite."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class NumericalFailure(FilterError):
    """Covariance lost positive semidefiniteness beyond tolerance."""


class InsufficientEnsemble(FilterError, ValueError):
    pass


class OracleFailure(FilterError):
    """Quadrature for the exact gain did not converge."""


class IllConditionedBasis(FilterError):
    pass


class DegenerateKernel(FilterError):
    pass


class InfeasibleMarginals(FilterError, ValueError):
    pass


class EpsilonTooLarge(FilterError, ValueError):
    def __init__(self, epsilon, bound):
        super().__init__(
            f"epsilon={epsilon:g} makes perturbed marginals negative; "
            f"admissible bound is epsilon < {bound:.6g}"
        )
        self.epsilon = epsilon
        self.bound = bound


class ConfigError(FilterError, ValueError):
    pass
