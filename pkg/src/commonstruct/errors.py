"""Exception hierarchy shared by every module.

Each class carries a ``kind`` string and an ``exit_code`` so the CLI can turn
any failure into a structured error record without a lookup table.
"""


class CommonStructError(Exception):
    kind = "error"
    exit_code = 2


class InputError(CommonStructError):
    kind = "input"
    exit_code = 2


class FormatError(InputError):
    kind = "format"


class EmptyInputError(InputError):
    kind = "empty-input"


class ValidationError(InputError):
    kind = "validation"


class DomainError(InputError):
    kind = "domain"


class CapacityError(CommonStructError):
    kind = "capacity"
    exit_code = 3


class NumericalError(CommonStructError):
    kind = "numerical"
    exit_code = 4


class DegenerateInitError(NumericalError):
    kind = "degenerate-init"


class DegeneracyError(NumericalError):
    kind = "degeneracy"


class TrainingError(NumericalError):
    kind = "training"


class DeltaTooLargeError(DomainError):
    kind = "delta-too-large"

    def __init__(self, message, max_delta):
        super().__init__(message)
        self.max_delta = max_delta
