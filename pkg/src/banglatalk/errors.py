"""Exception hierarchy shared across the package."""


class BanglaTalkError(Exception):
    """Base class for all package errors."""


class AudioFormatError(BanglaTalkError):
    """Input audio is not mono 16-bit PCM at a supported rate."""


class FramingError(BanglaTalkError, ValueError):
    """A frame has the wrong sample count or sample rate for an operation."""


class ParameterError(BanglaTalkError, ValueError):
    """An algorithm parameter is out of range."""


class CodecError(BanglaTalkError):
    """Encoding or decoding failed."""


class RtpError(BanglaTalkError, ValueError):
    """Base class for RTP wire-format errors."""


class TruncatedPacketError(RtpError):
    """Datagram too short to hold a header plus a nonempty payload."""


class ProtocolError(RtpError):
    """Datagram violates the RTP header layout used by this system."""


class TransportError(BanglaTalkError):
    """Socket-level send or receive failure."""


class InstrumentationError(BanglaTalkError):
    """Stage timer start/stop calls were unbalanced."""


class BackendError(BanglaTalkError):
    """An ASR, LLM or TTS backend failed or timed out."""


class MeasurementError(BanglaTalkError):
    """Events required for a measurement are missing."""


class ManifestError(BanglaTalkError):
    """An evaluation manifest could not be used."""


class ConfigError(BanglaTalkError):
    """Invalid configuration key or value."""
