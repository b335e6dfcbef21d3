"""Exception hierarchy shared across the package."""


class QbilstmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidBitwidthError(QbilstmError, ValueError):
    pass


class DomainError(QbilstmError, ValueError):
    """Non-finite input or an argument outside the function's domain."""


class DimensionError(QbilstmError, ValueError):
    pass


class BatchNormFoldError(QbilstmError, ValueError):
    pass


class FoldingConfigError(QbilstmError, ValueError):
    """PE/SIMD parallelism settings inconsistent with the layer dimensions."""


class ImageFormatError(QbilstmError, ValueError):
    pass


class ModelFormatError(QbilstmError, ValueError):
    pass


class DatasetError(QbilstmError, ValueError):
    pass


class UndefinedRateError(QbilstmError, ValueError):
    """Error rate requested against an empty reference."""
