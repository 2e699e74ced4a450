"""Exception classes, grouped by the failure class they report.

The CLI maps these onto distinct exit codes (see ``greyboxid.cli``), so
library code should raise the most specific class that applies.
"""


class GreyBoxError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(GreyBoxError):
    """A file or record is unreadable or internally inconsistent."""


class NumericalError(GreyBoxError):
    """A numerical operation failed (singularity, rank deficiency, ...)."""


class SimulationDivergence(NumericalError):
    """A simulated response overflowed or became non-finite.

    ``sample_index`` is the first output sample at which the divergence
    was detected, when known.
    """

    def __init__(self, message, sample_index=None):
        if sample_index is not None:
            message = f"{message} (at sample {sample_index})"
        super().__init__(message)
        self.sample_index = sample_index


class ConvergenceFailure(NumericalError):
    """An iterative solve (e.g. a per-sample implicit output equation)
    did not reach its tolerance within the allowed iterations."""
