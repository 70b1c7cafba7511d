"""Exception types shared across the package."""


class PrisonSimError(Exception):
    pass


class ConfigurationError(PrisonSimError, ValueError):
    """Invalid configuration or arguments; the CLI maps it to exit code 2."""


class BackendError(PrisonSimError):
    """Base class for failures talking to a model or scoring endpoint."""


class TransportError(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class MalformedResponseError(BackendError):
    pass


class EmptyCompletionError(BackendError):
    pass


class AnnotationError(PrisonSimError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RankDeficientError(PrisonSimError, ValueError):
    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")


class PerfectSeparationError(PrisonSimError, ValueError):
    pass


class StoreError(PrisonSimError):
    pass


class SchemaError(StoreError, ValueError):
    pass


class DuplicateDocumentError(StoreError):
    pass
