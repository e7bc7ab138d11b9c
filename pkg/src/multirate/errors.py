"""Exception types shared across the package."""


class MultirateError(Exception):
    """Base class for every error raised by this package."""


class ValidationFailure(MultirateError):
    """A domain invariant was violated (shapes, rates, counts, finiteness)."""


class NonIntegerRatio(ValidationFailure):
    """Robot sample rate is not an integer multiple of the frame rate."""


class MixedRatio(MultirateError):
    """A batch mixes episodes with different robot-to-frame rate ratios."""


class EmptyInput(MultirateError):
    """An operation that needs at least one episode received none."""


class ProvenanceMismatch(MultirateError):
    """A dataset does not line up with the episode it claims to come from."""


class NumericalDivergence(MultirateError):
    """Simulated state left the configured magnitude bound."""


class IoFailure(MultirateError):
    """Filesystem-level failure while persisting or loading data."""


class ParseFailure(MultirateError):
    """A manifest or data file could not be decoded."""


class ChecksumMismatch(MultirateError):
    """Stored checksum does not match the bytes on disk."""
