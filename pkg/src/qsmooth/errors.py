"""Exception types raised by qsmooth."""


class QsmoothError(Exception):
    """Base class for all qsmooth errors."""


class ContractError(QsmoothError, ValueError):
    """An argument violates a documented precondition."""


class DimensionError(ContractError):
    pass


class ParameterError(ContractError):
    pass


class PositivityError(QsmoothError, ArithmeticError):
    """An operator that must be positive has an eigenvalue below the floor."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = float(eigenvalue)
        super().__init__(message or f"eigenvalue {self.eigenvalue:.3e} below positivity floor")


class ImpossibleRecordError(QsmoothError, ArithmeticError):
    """The record has zero probability given the current state."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class StepSizeError(QsmoothError, ArithmeticError):
    pass


class DegenerateEnsembleError(QsmoothError, ArithmeticError):
    """Every importance weight vanished at some grid time."""

    def __init__(self, time, index=None):
        self.time = float(time)
        self.index = index
        super().__init__(f"all ensemble weights are zero at t={self.time:g}")
