class ExtractError(Exception):
    """Base class for extractor failures."""


class ParameterError(ExtractError):
    """An argument is outside its documented domain."""


class FetchError(ExtractError):
    """A required dataset, model, or lexical database is unavailable; the
    message carries instructions for obtaining it."""
