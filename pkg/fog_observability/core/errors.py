class OdlcError(Exception):
    """Base of every domain error. The CLI turns these into exit code 1."""

    def __init__(self, message='', **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        out = {'error': type(self).__name__, 'message': self.message}
        out.update({key: value for key, value in self.details.items() if value is not None})
        return out


class ConfigError(OdlcError):
    pass


# core-model
class WeightSumError(OdlcError, ValueError):
    pass


class WeightRangeError(OdlcError, ValueError):
    pass


class InvalidInterval(OdlcError, ValueError):
    pass


class InvalidRecord(OdlcError, ValueError):
    pass


# exposition
class ParseError(OdlcError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message, line=line)
        self.line = line


# edge-agent
class SourceUnavailable(OdlcError):
    pass


class FileRotated(OdlcError):
    pass


class UnbalancedSpan(OdlcError):
    pass


class RecordTooLarge(OdlcError):
    pass


class ConnectionLost(OdlcError):
    pass


class TransmitTimeout(OdlcError):
    pass


# fog-node
class MalformedFrame(OdlcError):
    pass


class StorageFull(OdlcError):
    pass


class UnknownSeries(OdlcError):
    pass


class InvalidRange(OdlcError, ValueError):
    pass


class TraceNotFound(OdlcError, KeyError):
    pass


class BadSelector(OdlcError, ValueError):
    pass


class SinkUnavailable(OdlcError):
    pass


class AddressInUse(OdlcError):
    pass


class FogUnreachable(OdlcError):
    pass


# cloud-archive
class ChecksumMismatch(OdlcError):
    pass


class DuplicateSegment(OdlcError):
    pass


class DegeneratePolygon(OdlcError, ValueError):
    pass


class MissingField(OdlcError, KeyError):
    pass


# overhead-meter
class AccountingUnavailable(OdlcError):
    pass


class NoSamples(OdlcError):
    pass


# replay-harness
class ScenarioConfigError(OdlcError):
    pass


class OutOfRange(OdlcError, ValueError):
    pass
