"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class MarkupError(Exception):
    """Base class for all errors raised by magic_markup."""


# annotation model / sidecar

class IncompatiblePoint(MarkupError):
    pass


class InvertedRange(MarkupError):
    pass


class SchemaError(MarkupError):
    pass


class StaleSidecar(MarkupError):
    """The sidecar digest does not match the document on disk."""


class ValidationError(MarkupError):
    pass


class AnchorMismatch(ValidationError):
    """A stored anchor text disagrees with the document substring."""


# text location

class SpanOutOfRange(MarkupError):
    pass


class EmptyNeedle(MarkupError):
    pass


class OccurrenceOutOfRange(MarkupError):
    pass


# model client

class ClientError(MarkupError):
    pass


class TransportError(ClientError):
    pass


class AuthError(ClientError):
    pass


class JsonModeViolation(ClientError):
    pass


class ReplayMiss(ClientError):
    """A replay client received a request that is not in its transcript."""


# retagging

class NoDelimiterAvailable(MarkupError):
    pass


class DelimiterCollision(MarkupError):
    pass


class InvalidSegment(MarkupError):
    pass


class DelimiterCountError(MarkupError):
    def __init__(self, count: int, delimiter: str):
        super().__init__(f"expected exactly 2 {delimiter!r} delimiters, found {count}")
        self.count = count
        self.delimiter = delimiter


class MalformedAnswer(MarkupError):
    pass


class NoMatch(MarkupError):
    pass


# benchmark generation

class GenerationError(MarkupError):
    pass
