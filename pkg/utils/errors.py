"""Exception hierarchy shared by every package."""


class MMFFError(Exception):
    """Base class for all errors raised by this project."""

    kind = "error"


class DimensionError(MMFFError, ValueError):
    kind = "dimension"


class NumericError(MMFFError, ArithmeticError):
    kind = "numeric"


class ContractError(MMFFError, RuntimeError):
    kind = "contract"


class ConfigurationError(MMFFError, ValueError):
    kind = "config"


class ArgumentError(MMFFError, ValueError):
    kind = "argument"


class IngestError(MMFFError, ValueError):
    kind = "ingest"

    def __init__(self, message: str, sample_id: str = None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"sample {sample_id!r}: {message}"
        super().__init__(message)


class CheckpointError(MMFFError, ValueError):
    kind = "checkpoint"
