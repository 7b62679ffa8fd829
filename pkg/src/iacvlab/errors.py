"""Exception types shared across the package.

Every error raised for bad *input* derives from ``InputError`` so the CLI can
map it to exit code 2 without knowing the concrete type.
"""


class IacvError(Exception):
    """Base class for all package errors."""


class InputError(IacvError, ValueError):
    """Invalid input data or parameters."""


class DomainError(InputError):
    """A parameter lies outside the domain of the formula (e.g. rate <= -1)."""


class NoRootError(IacvError):
    """The implicit-rate equation has no root on the search interval."""


class InconsistentContractError(InputError):
    """Cash flows do not amortize the principal at the given rate."""


class DegenerateShapeError(InputError):
    """A risk-profile shape carries no weight."""


class RatioUndefinedError(InputError):
    """Relative PD change is undefined (zero PD at origination)."""


class InconsistentELError(InputError):
    """12-month expected loss exceeds lifetime expected loss."""


class UnmatchedExposureError(InputError):
    """An exposure cannot be linked between two snapshots."""


class PartitionError(InputError):
    """Exposures cannot be partitioned into PL / new NPL / old NPL."""


class CadenceGapError(InputError):
    """Observation dates are not equally spaced."""


class OverCollateralizedError(InputError):
    """Collateral value after haircut exceeds the gross carrying amount."""


class PoolViolationError(InputError):
    """A static pool gained members after construction."""


class ReconciliationError(IacvError):
    """Stacked components do not add up to the reconciled total."""


class SchemaError(InputError):
    """A CSV file does not follow its declared schema."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class AnalyticWarning(UserWarning):
    """A result was produced but deserves attention (escalated by --strict)."""


class AmbiguousRootWarning(AnalyticWarning):
    """Expected cash flows change sign more than once; the IRR may not be unique."""


class PartialSplitWarning(AnalyticWarning):
    """Default-time values were missing for some new defaults."""
