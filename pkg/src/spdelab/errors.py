"""Exception types and the divergence marker shared across the package."""

from dataclasses import dataclass, field


class SpdeLabError(Exception):
    """Base class for all package errors."""


class BudgetExceeded(SpdeLabError):
    """A numerical routine ran out of its evaluation budget.

    `partial` holds the best value reached and `error` its estimated error.
    """

    def __init__(self, message, partial=None, error=None):
        super().__init__(message)
        self.partial = partial
        self.error = error


class CannotCapture(SpdeLabError):
    """The mode lattice cannot capture the requested fraction of the Dalang mass."""


class DivergentMeasure(SpdeLabError):
    """A finite spectral integral was required but the measure makes it infinite."""


class UnsupportedKernel(SpdeLabError):
    """The requested kernel operation is not available for this equation/dimension."""


class InvalidInitialData(SpdeLabError):
    """Initial data does not carry the regularity the equation needs."""


class ConeViolation(SpdeLabError):
    """The linear field does not cover the wave light-cone margin."""


class NoConvergence(SpdeLabError):
    """Picard iteration stopped without meeting its tolerance."""

    def __init__(self, message, iterations=None, residual=None, history=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.history = history or []


class InsufficientSamples(SpdeLabError):
    """An estimator was asked to work with too few samples."""


class ConfigError(SpdeLabError):
    """Invalid experiment configuration. `problems` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Divergent:
    """Result marker for an integral whose truncations do not settle.

    `cutoffs` and `partials` are the truncation radii and truncated values
    used by the detector; `slopes` are the per-octave log2 slopes of the
    shell increments.
    """

    cutoffs: tuple = field(default=())
    partials: tuple = field(default=())
    slopes: tuple = field(default=())

    def __repr__(self):
        last = self.partials[-1] if self.partials else float("nan")
        return f"Divergent(last_partial={last:.6g}, cutoff={self.cutoffs[-1] if self.cutoffs else None})"


def is_divergent(value):
    return isinstance(value, Divergent)
