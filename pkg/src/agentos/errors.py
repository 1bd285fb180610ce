"""Exception hierarchy for the runtime.

Action-level failures (a click on a disabled control, a handler error) are
reported in-band as ActionOutcome records, not exceptions. Exceptions are
reserved for protocol misuse and environment-level faults.
"""


class AgentOSError(Exception):
    """Base class for all runtime errors."""

    code = "AgentOSError"

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


class UnknownApp(AgentOSError):
    code = "UnknownApp"


class AppNotRunning(AgentOSError):
    code = "AppNotRunning"


class DuplicateApi(AgentOSError):
    code = "DuplicateApi"


class SchemaViolation(AgentOSError):
    code = "SchemaViolation"


class ApiHandlerError(AgentOSError):
    code = "ApiHandlerError"


class IllegalTransition(AgentOSError):
    code = "IllegalTransition"


class PlannerOutputMalformed(AgentOSError):
    code = "PlannerOutputMalformed"


class BackendUnavailable(AgentOSError):
    code = "BackendUnavailable"


class SessionClosed(AgentOSError):
    code = "SessionClosed"


class RoundInProgress(AgentOSError):
    code = "RoundInProgress"


class NotPending(AgentOSError):
    code = "NotPending"


class MalformedRecord(AgentOSError):
    code = "MalformedRecord"


class MalformedRule(AgentOSError):
    code = "MalformedRule"


class CatalogMismatch(AgentOSError):
    code = "CatalogMismatch"


class ScenarioCriteriaMissing(AgentOSError):
    code = "ScenarioCriteriaMissing"
