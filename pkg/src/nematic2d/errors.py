"""Exception types shared across the package."""


class NematicError(Exception):
    """Base class for all package errors."""


class DomainError(NematicError, ValueError):
    """Argument outside the domain of a function (e.g. |n| >= 1 where Λ diverges)."""


class BesselOverflowError(NematicError, OverflowError):
    """Modified Bessel value not representable as a float64."""


class NumericalInstabilityError(NematicError, RuntimeError):
    """A time stepper produced an inadmissible state; retry with a smaller dt."""


class ConfigError(NematicError):
    """Invalid experiment configuration.

    ``problems`` lists every offending key found during validation.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
