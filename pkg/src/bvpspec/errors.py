"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class BVPError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""

    code = "domain error"

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def to_json(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        if self.diagnostics:
            out["diagnostics"] = [d.to_json() if hasattr(d, "to_json") else d for d in self.diagnostics]
        return out


class ValidationError(BVPError, ValueError):
    code = "invalid input"


class IntegrationError(BVPError):
    code = "stiffness/overflow"


class NotInResolventSet(BVPError):
    code = "not in resolvent set"


class BoundaryTooClose(BVPError):
    code = "boundary too close to a zero"


class RepresentationUnavailable(BVPError):
    code = "representation unavailable at this lambda"


class IdenticalOperators(BVPError):
    code = "identical operators"


class InadmissibleZ(BVPError):
    code = "inadmissible z"
