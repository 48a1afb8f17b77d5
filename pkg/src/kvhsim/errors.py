"""Exception hierarchy.

Numerical aborts carry the name of the violated invariant so the CLI can
emit a machine-readable error record.
"""


class KvhError(Exception):
    """Base class for all package errors."""


class GridError(KvhError, ValueError):
    """Invalid grid construction parameters."""


class OddSizeError(GridError):
    pass


class GridMismatchError(KvhError, ValueError):
    """Fields or Hamiltonians defined on incompatible grids/dimensions."""


class HamiltonianError(KvhError, ValueError):
    """Hamiltonian of the wrong kind for the requested operation."""


class IncompatibleTransformError(KvhError, ValueError):
    """(eta, phi) pair violates eta^* theta + d phi = theta."""


class ConfigError(KvhError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvariantViolation(KvhError, RuntimeError):
    """A monitored numerical invariant left its tolerance during a run."""

    def __init__(self, invariant, message, **context):
        self.invariant = invariant
        self.context = context
        super().__init__(f"{invariant}: {message}")

    def record(self):
        return {"error": "InvariantViolation", "invariant": self.invariant,
                "message": str(self), "context": self.context}


class CFLViolation(InvariantViolation):
    def __init__(self, message, **context):
        super().__init__("cfl", message, **context)


class BoundaryMassExceeded(InvariantViolation):
    def __init__(self, message, **context):
        super().__init__("boundary_mass", message, **context)


class TruncationError(InvariantViolation):
    def __init__(self, message, **context):
        super().__init__("basis_truncation", message, **context)
