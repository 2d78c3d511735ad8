"""Exception types shared across the toolkit."""


class DivnetError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DivnetError):
    """Input data violates a documented invariant."""


class FormatError(DivnetError):
    """A file, feed or record does not match its declared format."""


class FeedParseError(FormatError):
    """A vulnerability feed is malformed.

    ``record`` identifies the offending record (index or CVE id) so that
    broken feeds can be located without re-parsing.
    """

    def __init__(self, message, record=None):
        super().__init__(message if record is None else f"{message} (record: {record})")
        self.record = record


class MissingEntryError(DivnetError):
    """A lookup against a catalog or similarity table failed."""


class BuildError(DivnetError):
    """A model (MRF problem, Bayesian network, ...) cannot be constructed."""


class GuardError(DivnetError):
    """An exact computation would exceed its state-space guard."""
