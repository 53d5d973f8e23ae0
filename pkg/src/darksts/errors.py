"""Exception types shared across the pipeline."""


class DarkStsError(Exception):
    """Base class for all errors raised by this package."""


class OutOfRange(DarkStsError):
    """Input outside the domain an operation is valid for."""


class DegeneratePolygon(DarkStsError):
    """Polygon with fewer than 3 vertices or zero area."""


class ChecksumMismatch(DarkStsError):
    """NMEA sentence failed checksum validation."""


class UnsupportedMessageType(DarkStsError):
    """AIS message type outside the supported set (1, 2, 3, 5)."""

    def __init__(self, msg_type: int):
        self.msg_type = msg_type
        super().__init__(f"unsupported AIS message type {msg_type}")


class TruncatedPayload(DarkStsError):
    """Sentence or payload too short or malformed for the fields it must carry."""


class MissingColumn(DarkStsError):
    """Required CSV column absent from the header."""


class EmptyFile(DarkStsError):
    """Input file has no content at all (not even a header)."""


class OutOfScene(DarkStsError):
    """Point outside the scene footprint bounding box."""


class MissingScene(DarkStsError):
    """Detection references a scene_id not present in the scenes table."""


class MalformedRow(DarkStsError):
    """Row in a strict-schema file failed field validation."""


class NotAnStsDetection(DarkStsError):
    """Audit requested for a detection whose class is not an STS class."""


class DegenerateInput(DarkStsError):
    """Regression input with no usable variance."""


class ConfigInvalid(DarkStsError):
    """Scenario or run configuration failed validation."""


class IoFailure(DarkStsError):
    """Filesystem write failed."""
