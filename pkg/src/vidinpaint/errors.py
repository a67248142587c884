"""Exception types shared across the package."""


class VidinpaintError(Exception):
    """Base class for all package errors."""


class ConfigError(VidinpaintError):
    """Bad configuration: unknown key, invalid value, invalid network spec."""


class DataError(VidinpaintError):
    """Bad input data: missing files, shape mismatches, empty masks."""


class EmptyDirectory(DataError):
    pass


class UnreadableFile(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class CountMismatch(DataError):
    pass


class EmptyMask(DataError):
    pass


class OffsetTooLarge(DataError):
    pass


class InvalidSpec(ConfigError):
    pass


class ChannelMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class NonFiniteLoss(VidinpaintError):
    """Training produced a NaN/Inf loss; carries a diagnostic dump path."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


class EncoderUnavailable(ConfigError):
    pass


class EmptyRegion(DataError):
    pass


class IndivisibleGrid(ConfigError):
    pass


class NoEligibleMask(DataError):
    pass


class TooFewSequences(ConfigError):
    pass


class FrameTooSmall(DataError):
    pass


class OutOfBounds(DataError):
    pass


class TooShort(DataError):
    pass


class IOFailure(DataError):
    pass
