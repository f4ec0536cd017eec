"""Exception hierarchy shared by every stage of the pipeline."""


class PipelineError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 3


class ConfigError(PipelineError):
    exit_code = 2


class InvalidConfig(ConfigError, ValueError):
    pass


class InvalidK(ConfigError):
    pass


class DataError(PipelineError):
    exit_code = 3


class DegeneratePose(DataError):
    pass


class EmptyFrame(DataError):
    pass


class EmptyClip(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyGroup(DataError):
    pass


class NoCoverage(DataError):
    pass


class SingleClass(DataError):
    pass


class FormatError(DataError):
    pass


class ShapeMismatch(PipelineError):
    exit_code = 4


class NumericError(PipelineError):
    exit_code = 4
