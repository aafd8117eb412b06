"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions or ranks."""


class InvariantError(ValueError):
    """A model or tensor violates one of its structural invariants."""


class EmptyCorpusError(ValueError):
    """Ingestion retained zero tweets."""


class SpecError(ValueError):
    """A planted-instance specification is malformed or infeasible."""


class OracleSizeError(ValueError):
    """A dense reference computation was refused because the instance is too large."""


class SolverError(RuntimeError):
    """Numerical failure inside a solver.

    Carries whatever context is known at raise time (iteration, mode,
    element) plus the partial trace so callers can flush it.
    """

    def __init__(self, message, *, iteration=None, mode=None, element=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.mode = mode
        self.element = element
        self.trace = trace
