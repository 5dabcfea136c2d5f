"""Exception hierarchy shared by all modules."""


class CPLinearError(ValueError):
    """Base class for every error raised by the toolkit."""


class DimensionError(CPLinearError):
    pass


class HermiticityError(CPLinearError):
    pass


class InvalidStateError(CPLinearError):
    pass


class SpanError(CPLinearError):
    def __init__(self, rank, required):
        self.rank = rank
        self.required = required
        super().__init__(f"operator basis spans rank {rank}, need {required}")


class SingularMapError(CPLinearError):
    def __init__(self, smallest_singular_value, message=None):
        self.smallest_singular_value = float(smallest_singular_value)
        super().__init__(
            message or f"transfer matrix is singular (sigma_min={self.smallest_singular_value:.3e})"
        )


class NotInSpanError(CPLinearError):
    def __init__(self, residual):
        self.residual = float(residual)
        super().__init__(f"reduced state lies outside the reduced-basis span (residual {self.residual:.3e})")


class NotCompletelyPositiveError(CPLinearError):
    pass


class NormalizationError(CPLinearError):
    pass


class TimeRangeError(CPLinearError):
    pass


class GeneratorFormError(CPLinearError):
    pass
