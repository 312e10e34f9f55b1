"""Exception hierarchy for the laboratory."""


class CfLabError(Exception):
    """Base class for all package-specific errors."""


class GridError(CfLabError):
    """Requested initial data cannot be represented on the size grid."""


class SolverAbort(CfLabError):
    """Time stepper produced an invalid state (negative or non-finite counts)."""


class AbsorbingStateError(CfLabError):
    """Stochastic particle system has total event rate zero."""


class FanCoverageError(CfLabError):
    """Reconstruction query lies outside the range covered by surviving paths."""

    def __init__(self, message, covered=None, required=None):
        super().__init__(message)
        self.covered = covered
        self.required = required


class FanCrossingError(CfLabError):
    """Two characteristic paths crossed; the fan is unusable past that time."""


class ConfigError(CfLabError):
    """Experiment configuration file is missing, unreadable, or inconsistent."""


class MissingArtifactError(CfLabError):
    """An expected run artifact (trajectory CSV, ...) does not exist."""


class CsvFormatError(CfLabError):
    """A CSV artifact exists but cannot be parsed against its schema."""
