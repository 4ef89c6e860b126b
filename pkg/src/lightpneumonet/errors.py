"""Exception hierarchy shared across the package."""


class LightPneumoNetError(Exception):
    """Base class for all package errors."""


class ShapeError(LightPneumoNetError, ValueError):
    pass


class NumericError(LightPneumoNetError, ArithmeticError):
    pass


class ConfigError(LightPneumoNetError, ValueError):
    pass


class ArchitectureError(LightPneumoNetError, ValueError):
    pass


class StateError(LightPneumoNetError, RuntimeError):
    pass


class InputError(LightPneumoNetError, ValueError):
    pass


class DecodeError(LightPneumoNetError):
    def __init__(self, message, path=None, fmt=None):
        self.path = path
        self.fmt = fmt
        prefix = f"{path}: " if path is not None else ""
        super().__init__(prefix + message)


class DatasetError(LightPneumoNetError):
    pass


class LayoutError(DatasetError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class CheckpointFormatError(LightPneumoNetError):
    pass


class BadMagicError(CheckpointFormatError):
    pass


class UnsupportedVersionError(CheckpointFormatError):
    pass


class LayoutMismatchError(CheckpointFormatError):
    """Tensor names or shapes in the file disagree with the expected model."""


class TruncatedCheckpointError(CheckpointFormatError):
    pass


class ChecksumError(CheckpointFormatError):
    pass
