"""Transport-block framing: CRC arithmetic, attachment, verification.

Bits are numpy uint8 arrays of 0/1, MSB-first (index 0 is transmitted
first).  The two generator polynomials follow the 5G NR convention
(TS 38.212 shift-register, all-zero initial state):

    g16(D) = D^16 + D^12 + D^5 + 1
    g6(D)  = D^6  + D^5  + 1
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyInput, FrameTooShort, PayloadTooLong

MAX_TB_BITS = 1000

CRC16_POLY = 0x11021  # D^16 + D^12 + D^5 + 1
CRC6_POLY = 0x61      # D^6 + D^5 + 1


class CrcMode(Enum):
    CRC6 = (6, CRC6_POLY)
    CRC16 = (16, CRC16_POLY)

    @property
    def length(self) -> int:
        return self.value[0]

    @property
    def polynomial(self) -> int:
        return self.value[1]


@dataclass
class CrcPolicy:
    """TBS-to-CRC mapping.  The split point is not fixed by the standard
    yet, so it is exposed as a knob; small blocks take the 6-bit CRC."""

    crc6_max_tbs: int = 32

    def select(self, tbs: int) -> CrcMode:
        if not 1 <= tbs <= MAX_TB_BITS:
            raise PayloadTooLong(f"TBS {tbs} outside [1, {MAX_TB_BITS}]")
        return CrcMode.CRC6 if tbs <= self.crc6_max_tbs else CrcMode.CRC16


def as_bits(bits) -> np.ndarray:
    """Coerce to a validated uint8 0/1 array."""
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit array may contain only 0 and 1")
    return arr


def _bits_to_int(bits: np.ndarray) -> int:
    if bits.size == 0:
        return 0
    return int.from_bytes(np.packbits(bits).tobytes(), "big") >> ((-bits.size) % 8)


def _int_to_bits(value: int, length: int) -> np.ndarray:
    nbytes = (length + 7) // 8
    raw = np.frombuffer(value.to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[nbytes * 8 - length:]


def crc_remainder(bits: np.ndarray, mode: CrcMode) -> np.ndarray:
    """Remainder of bits * D^crc_len divided by the generator, over GF(2)."""
    bits = as_bits(bits)
    n = bits.size
    reg = _bits_to_int(bits) << mode.length
    top = mode.polynomial.bit_length() - 1
    for i in range(n):
        shift = n + mode.length - 1 - i
        if (reg >> shift) & 1:
            reg ^= mode.polynomial << (shift - top)
    return _int_to_bits(reg & ((1 << mode.length) - 1), mode.length)


def crc_attach(payload, mode: CrcMode) -> np.ndarray:
    """Append the CRC field to a payload.

    Raises EmptyInput / PayloadTooLong on out-of-range payload sizes.
    """
    payload = as_bits(payload)
    if payload.size == 0:
        raise EmptyInput("payload is empty")
    if payload.size > MAX_TB_BITS:
        raise PayloadTooLong(f"payload {payload.size} bits > {MAX_TB_BITS}")
    return np.concatenate([payload, crc_remainder(payload, mode)])


def crc_check(frame, mode: CrcMode) -> np.ndarray | None:
    """Return the payload if the CRC verifies, else None.

    None is the block-error signal consumed by the Monte-Carlo harness.
    """
    frame = as_bits(frame)
    if frame.size <= mode.length:
        raise FrameTooShort(f"frame of {frame.size} bits cannot carry CRC{mode.length}")
    if np.any(crc_remainder(frame, mode)):
        return None
    return frame[: frame.size - mode.length]


def select_crc(tbs: int, policy: CrcPolicy | None = None) -> CrcMode:
    """CRC mode for a transport-block size, per the configured policy."""
    return (policy or CrcPolicy()).select(tbs)
