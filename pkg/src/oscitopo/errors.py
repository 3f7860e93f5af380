"""Exception hierarchy shared by every module."""


class OscitopoError(Exception):
    """Base class for all package errors."""


class DomainError(OscitopoError, ValueError):
    """Non-finite or otherwise invalid numerical input."""


class PreconditionError(OscitopoError, ValueError):
    """An operation was called outside its documented precondition."""


class UnsupportedOperationError(OscitopoError):
    """The requested operation is not defined for this kind of system."""


class ParseError(OscitopoError, ValueError):
    """Syntax or semantic error in a custom-field definition."""

    def __init__(self, message, line, column, token):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, column {column}: {message} (at {token!r})")


class IntegrationError(OscitopoError):
    """Step-size underflow or step budget exhausted.

    ``partial`` holds the trajectory computed up to the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EventRefinementError(OscitopoError):
    """Root refinement of an event did not reach the required accuracy."""


class TangentEncounterError(OscitopoError):
    """A tangent section crossing was met before the first return."""

    def __init__(self, point):
        super().__init__(f"tangent crossing at t={point.t!r}, coords={point.coords!r}")
        self.point = point


class SearchFailure(OscitopoError):
    """Newton search for a periodic orbit did not converge."""

    def __init__(self, message, best_residual, best_point=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.best_point = best_point


class DegeneracyError(OscitopoError):
    """Jacobian determinant too small for the sign rule."""


class IllPosedError(OscitopoError):
    """The field vanishes (numerically) on the sphere used for a degree."""


class ResolutionError(OscitopoError):
    """Raw degree too far from an integer; refine the triangulation."""

    def __init__(self, raw_degree, subdivision):
        super().__init__(
            f"raw degree {raw_degree!r} not within 0.1 of an integer at subdivision {subdivision}"
        )
        self.raw_degree = raw_degree
        self.subdivision = subdivision


class AmbiguousCrossingError(OscitopoError):
    """Two strands swap order in projection with indistinguishable depth."""


class BraidInputError(OscitopoError, ValueError):
    """Braid word generator out of range."""


class ReturnFailure(OscitopoError):
    """A return to the section needed by a computation did not occur.

    ``fate`` records what happened instead (escape or time limit).
    """

    def __init__(self, fate):
        super().__init__(f"no return to the section: {fate.tag.value} at t={fate.t!r}")
        self.fate = fate
