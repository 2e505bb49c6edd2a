"""Exception types shared across the simulator."""


class AiotPhyError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AiotPhyError):
    """Invalid configuration value or combination."""


class EmptyInput(AiotPhyError):
    """An operation received an empty bit or chip sequence."""


class PayloadTooLong(AiotPhyError):
    """Transport block exceeds the 1000-bit channel limit."""


class FrameTooShort(AiotPhyError):
    """Frame shorter than the CRC it is supposed to carry."""


class LengthMismatch(AiotPhyError):
    """Sequence length incompatible with the requested operation."""


class UnsupportedScheme(AiotPhyError):
    """Line-coding or modulation scheme not valid for this operation."""


class SyncError(AiotPhyError):
    """Timing-acquisition signal not found in the received stream."""


class MalformedFrame(AiotPhyError):
    """Detected chip stream cannot be parsed into a frame."""


class BlockError(AiotPhyError):
    """CRC failed after decoding: the block is counted as an error."""
