"""Exception types shared across the package."""


class ElicitError(Exception):
    """Base class for all package errors."""


class ParseError(ElicitError):
    """A config or data file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" ({path}" + (f":{line}" if line is not None else "") + ")"
        super().__init__(message + where)


class ValidationError(ElicitError):
    """A config violated a structural invariant; names the offending key."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message if key is None else f"{message}: {key!r}")


class IoError(ElicitError):
    """Reading or writing an artifact failed."""


class FormatError(ElicitError):
    """An input record did not match the declared format."""

    def __init__(self, message: str, record_index: int | None = None):
        self.record_index = record_index
        where = f" (record {record_index})" if record_index is not None else ""
        super().__init__(message + where)


class UnsortedInput(ElicitError):
    """Chat messages must be given in timestamp order."""


class UnknownDocument(ElicitError):
    pass


class InvalidSpan(ElicitError):
    pass


class EmbedderFailure(ElicitError):
    pass


class TransportError(ElicitError):
    """External labeling-function endpoint unreachable after retries."""


class ProtocolError(ElicitError):
    """External labeling-function response violated the wire protocol."""


class UnknownLf(ElicitError):
    pass


class DimensionMismatch(ElicitError):
    pass


class KeyMismatch(ElicitError):
    """Predictions and gold labels do not cover the same keys."""


class NoOverlap(ElicitError):
    """Annotator logs share no jointly validated cells."""


class StaleItem(ElicitError):
    """The item was already validated by this annotator."""


class InvalidRecord(ElicitError):
    pass


class SessionClosed(ElicitError):
    pass


class CorruptState(ElicitError):
    """The event log is unreadable; carries the byte offset of the bad line."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" (log offset {offset})" if offset is not None else ""
        super().__init__(message + where)


class BindError(ElicitError):
    pass
