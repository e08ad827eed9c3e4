"""Exception hierarchy shared by all modules.

Every domain failure derives from EngineError so the CLI and the HTTP
service can map them uniformly (exit code 1 / 4xx) while genuine bugs
still surface as ordinary exceptions.
"""


class EngineError(Exception):
    """Base class for all expected domain errors."""


class KeySyntaxError(EngineError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class HierarchyFormatError(EngineError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InvalidHierarchyError(EngineError):
    """Raised when a structurally invalid hierarchy is used; carries the report."""

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


class UnknownConceptError(EngineError):
    pass


class UnknownNodeError(EngineError):
    pass


class MultiaxialSyntaxError(EngineError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DConceptError(EngineError):
    pass


class StoreError(EngineError):
    pass


class SchemaVersionError(StoreError):
    pass


class UnknownAxisError(StoreError):
    pass


class UnknownKeyError(StoreError):
    pass


class DuplicateEpisodeError(StoreError):
    pass


class ChangeSetVersionError(StoreError):
    pass


class SessionError(EngineError):
    pass


class WrongQuestionError(SessionError):
    pass


class SelectionError(SessionError):
    pass


class ConsistencyError(SessionError):
    pass
