"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front-end can map
failures onto its stable exit-status contract without inspecting messages.
"""


class DesPlantError(Exception):
    exit_code = 1


class InputError(DesPlantError, ValueError):
    """Malformed or inconsistent input: dimensions, unknown symbols, bad files."""


class BoundaryStateError(InputError):
    """A state lies on the kernel of some partition functional."""


class CapacityError(InputError):
    pass


class EmptyDomainError(InputError):
    pass


class DivergenceError(DesPlantError, ArithmeticError):
    exit_code = 4


class NotObservableError(DesPlantError):
    exit_code = 2


class InadmissibleSequenceError(DesPlantError):
    """No transition explains the plant-symbol at ``position`` (1-based)."""

    exit_code = 3

    def __init__(self, message, position):
        super().__init__(message)
        self.position = position
