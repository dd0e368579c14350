"""Error types raised by the kernel lab models.

Every error also subclasses ValueError so callers that only know about
bad arguments can keep catching that.
"""


class KernelLabError(ValueError):
    """Base class for all kernel lab errors"""


class DegeneratePairError(KernelLabError):
    """Kernel quantities requested at x == y"""

    def __init__(self, x=None, y=None):
        detail = f" (x={x}, y={y})" if x is not None else ""
        super().__init__(f"degenerate pair{detail}")


class DerivativeUnavailableError(KernelLabError):
    """The wavelet family carries no derivative table"""

    def __init__(self, kind: str = ""):
        detail = f" for {kind} wavelet" if kind else ""
        super().__init__(f"derivative unavailable{detail}")


class HypothesisUnmetError(KernelLabError):
    """A theorem hypothesis required by a check does not hold"""

    def __init__(self, detail: str = ""):
        super().__init__(f"hypothesis unmet{': ' + detail if detail else ''}")


class EmptyInputError(KernelLabError):
    """An operation needing at least one element received none"""


class DomainError(KernelLabError):
    """Argument outside the domain of an operation"""


class TableFormatError(KernelLabError):
    """Malformed or version-mismatched data file"""


class ConfigError(KernelLabError):
    """Experiment configuration rejected by validation"""

    def __init__(self, key: str, detail: str):
        self.key = key
        super().__init__(f"config invalid: {key}: {detail}")
