"""Exception hierarchy shared by every layer.

Each error carries a machine-readable ``code`` which the HTTP layer copies
verbatim into ``{"code": ..., "message": ...}`` error bodies.
"""

from __future__ import annotations


class ALaaSError(Exception):
    code = "InternalError"
    http_status = 500

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details


class ValidationFailed(ALaaSError):
    code = "InvalidRequest"
    http_status = 400


class DuplicateUri(ValidationFailed):
    code = "DuplicateUri"
    http_status = 409

    def __init__(self, uri: str):
        super().__init__(f"duplicate uri: {uri}", uri=uri)
        self.uri = uri


class UnsupportedScheme(ValidationFailed):
    code = "UnsupportedScheme"

    def __init__(self, uri: str):
        super().__init__(f"unsupported or unparseable uri: {uri!r}", uri=uri)
        self.uri = uri


class EmptyDataset(ValidationFailed):
    code = "EmptyDataset"


class BudgetExceedsPool(ValidationFailed):
    code = "BudgetExceedsPool"

    def __init__(self, budget: int, pool: int):
        super().__init__(f"budget {budget} exceeds pool of {pool} samples", budget=budget, pool=pool)


class InvalidLabeledIds(ValidationFailed):
    code = "InvalidLabeledIds"


class UnknownStrategy(ValidationFailed):
    code = "UnknownStrategy"


class MalformedMatrix(ValidationFailed):
    code = "MalformedMatrix"


class MalformedRow(ValidationFailed):
    code = "MalformedRow"


class DimensionMismatch(ValidationFailed):
    code = "DimensionMismatch"


class RowMisalignment(ValidationFailed):
    code = "RowMisalignment"


class MissingInput(ValidationFailed):
    code = "MissingInput"

    def __init__(self, field: str):
        super().__init__(f"strategy requires {field!r}", field=field)
        self.field = field


class EmptyPayload(ValidationFailed):
    code = "EmptyPayload"


class UnknownDataset(ALaaSError):
    code = "UnknownDataset"
    http_status = 404


class UnknownJob(ALaaSError):
    code = "UnknownJob"
    http_status = 404


class FetchFailed(ALaaSError):
    code = "FetchFailed"
    http_status = 502

    def __init__(self, uri: str, cause: str):
        super().__init__(f"fetch failed for {uri}: {cause}", uri=uri, cause=cause)
        self.uri = uri
        self.cause = cause


class HashMismatch(ALaaSError):
    code = "HashMismatch"


class CacheWriteFailed(ALaaSError):
    code = "CacheWriteFailed"


class BackendUnavailable(ALaaSError):
    code = "BackendUnavailable"
    http_status = 503


class MalformedResponse(ALaaSError):
    code = "MalformedResponse"
    http_status = 502


class BatchTooLarge(ValidationFailed):
    code = "BatchTooLarge"


class Cancelled(ALaaSError):
    code = "Cancelled"


class ScenarioMismatch(ValidationFailed):
    code = "ScenarioMismatch"


class ConfigError(ALaaSError):
    code = "ConfigError"


class ParseError(ConfigError):
    code = "ParseError"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message, line=line)
        self.line = line


class UnknownKey(ConfigError):
    code = "UnknownKey"

    def __init__(self, key: str, path: str | None = None):
        super().__init__(f"unknown config key {path or key!r}", key=key, path=path or key)
        self.key = key
        self.path = path or key


class InvalidValue(ConfigError):
    code = "InvalidValue"

    def __init__(self, key: str, reason: str):
        super().__init__(f"invalid value for {key}: {reason}", key=key, reason=reason)
        self.key = key
        self.reason = reason


class BindFailed(ALaaSError):
    code = "BindFailed"


# -- client side --------------------------------------------------------------


class ClientError(ALaaSError):
    code = "ClientError"


class ServerUnreachable(ClientError):
    code = "ServerUnreachable"


class ServerError(ClientError):
    """The server answered with an error body."""

    code = "ServerError"

    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{status} {code}: {message}", status=status, server_code=code)
        self.status = status
        self.server_code = code


class JobFailed(ClientError):
    code = "JobFailed"

    def __init__(self, job_id: str, state: str, message: str):
        super().__init__(f"job {job_id} {state}: {message}", job_id=job_id, state=state)
        self.job_id = job_id
        self.state = state


class PollTimeout(ClientError):
    code = "PollTimeout"
