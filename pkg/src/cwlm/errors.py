"""Exception types raised across the package."""


class CWLMError(Exception):
    """Base class for all package errors."""


class CorpusTooShortError(CWLMError):
    pass


class ConfigError(CWLMError):
    """Bad configuration: unknown key, unparsable value or violated constraint.

    ``line`` is the 1-based line number in the config source (None for
    command-line overrides or derived checks).
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(CWLMError):
    pass


class VocabularyMismatchError(CWLMError):
    pass


class NonFiniteLossError(CWLMError):
    pass


class CheckpointError(CWLMError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass
