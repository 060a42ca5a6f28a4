class DgdaError(Exception):
    """Base class for every error raised by the lab."""


class ContractViolation(DgdaError, ValueError):
    """A precondition of an operation was not met (shapes, ranges, empty batches)."""


class NumericDomainError(DgdaError, ArithmeticError):
    """An input lies outside the domain of a numeric operation."""


class ConfigError(DgdaError, ValueError):
    pass


class FeatureFormatError(DgdaError):
    """A DGDF feature file or its manifest could not be parsed."""


class BadMagicError(FeatureFormatError):
    def __init__(self, found: bytes, offset: int = 0, expected: bytes = b"DGDF"):
        self.found = found
        self.offset = offset
        super().__init__(f"bad magic {found!r} at offset {offset}, expected {expected!r}")


class TruncatedFileError(FeatureFormatError):
    def __init__(self, what: str, offset: int, needed: int, available: int):
        self.offset = offset
        super().__init__(
            f"truncated file while reading {what} at offset {offset}: "
            f"needed {needed} bytes, {available} available"
        )


class ManifestMismatchError(FeatureFormatError):
    pass
