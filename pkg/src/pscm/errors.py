"""Exception hierarchy shared by all pscm modules."""


class PscmError(Exception):
    """Base class for every error raised by this package."""


class MalformedModelError(PscmError, ValueError):
    """The model matrices are inconsistent (shape, cycle, empty source column)."""


class ConfigError(PscmError, ValueError):
    """A generation / recovery / experiment configuration is infeasible."""


class AssumptionViolationError(PscmError):
    """A direct cause is not a possible parent of its child.

    ``edge`` is ``(parent, child)``; ``partial`` holds whatever per-variable
    results were produced before the check aborted.
    """

    def __init__(self, message, edge=None, partial=None):
        super().__init__(message)
        self.edge = edge
        self.partial = partial


class MarriageViolationError(PscmError):
    """Least-squares design matrix is row-rank deficient for variable ``k``."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class ModelMismatchError(PscmError):
    """Overdetermined solve left a residual above tolerance for variable ``k``."""

    def __init__(self, message, k=None, residual=None):
        super().__init__(message)
        self.k = k
        self.residual = residual


class InternalConsistencyError(PscmError):
    """Two independent computations that must agree did not."""


class DistinctSourceRequiredError(PscmError):
    """The distinct-source check was called on a model lacking private sources."""


class SeparationError(PscmError):
    """Source separation could not be carried out on the given data."""


class ParseError(PscmError, ValueError):
    """An input file violates its declared format."""

    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.column = column
