"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation problems exit 1,
unmet scenario expectations exit 2, numerical/construction failures exit 3.
"""


class TailglmError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TailglmError):
    """Bad user input (config files, datasets, option values).

    Carries every problem found, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(TailglmError):
    """A numerical routine failed to reach its required accuracy."""


class ConstructionError(TailglmError):
    """Tail-extension knot search failed (signals a malformed link)."""


class AssumptionViolationError(TailglmError):
    """A link violates the positivity/boundedness requirements."""


class NotApplicableError(TailglmError):
    """An operation was called on inputs outside its domain of use."""


class EnvironmentInvariantError(TailglmError):
    """A simulation environment produced an out-of-range reward mean."""
