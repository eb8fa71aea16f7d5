"""Exception taxonomy. The CLI maps these onto its exit codes."""


class FundusQCError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FundusQCError):
    """Invalid configuration file or hyperparameter combination (exit 2)."""


class DataError(FundusQCError):
    """Malformed manifest, missing file or bad image data (exit 3)."""


class ManifestError(DataError):
    """Manifest parse or validation failure; message names the row."""


class CheckpointError(FundusQCError):
    """Unreadable, corrupted or incompatible checkpoint."""


class InitializationError(FundusQCError):
    """Model construction failed, e.g. pretrained weights unavailable."""


class TrainingAborted(FundusQCError):
    """Training stopped on a non-finite loss or gradient (exit 4)."""

    def __init__(self, message, epoch=None, batch=None, max_abs_grad=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.max_abs_grad = max_abs_grad
