"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to.
"""


class FBHError(Exception):
    exit_code = 1

    def diagnostic(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class ConfigurationError(FBHError, ValueError):
    """Invalid input; ``key`` names the offending config key when there is one."""

    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

    def diagnostic(self):
        d = super().diagnostic()
        if self.key is not None:
            d["key"] = self.key
        return d


class NumericalError(FBHError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericalError):
    """Raised when an iterative scheme exhausts its budget.

    ``history`` keeps whatever increments were recorded before giving up.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])

    def diagnostic(self):
        d = super().diagnostic()
        d["history"] = [float(h) for h in self.history]
        return d


class CapabilityError(FBHError, TypeError):
    exit_code = 2


class ProbeFailure(FBHError, AssertionError):
    exit_code = 4
