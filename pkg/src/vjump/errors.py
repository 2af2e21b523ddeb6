"""Exception hierarchy shared by the library and the command-line front-end.

Each class carries the process exit code the CLI reports for it.
"""


class VJumpError(Exception):
    exit_code = 1
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ValidationError(VJumpError, ValueError):
    """Malformed input: bad config field, negative rate, wrong shapes."""

    exit_code = 2
    kind = "validation"

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

    def to_dict(self):
        out = super().to_dict()
        if self.path is not None:
            out["path"] = self.path
        return out


class PreconditionError(VJumpError):
    """A mathematical hypothesis of the requested computation does not hold."""

    exit_code = 3
    kind = "precondition"


class EnumerationLimitError(PreconditionError):
    kind = "enumeration-limit"


class NumericalGuardError(VJumpError):
    """The computation would leave its region of numerical validity."""

    exit_code = 4
    kind = "numerical-guard"


class BranchCrossingError(NumericalGuardError):
    kind = "branch-crossing"
