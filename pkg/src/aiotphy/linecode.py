"""Chip-level line coding.

Manchester and PIE for the reader-to-device direction; Manchester, FM0
and Miller (subcarrier factor 2/4/8) for device-to-reader.  Chips are
uint8 0/1 arrays; PIE additionally carries per-chip durations since its
two chips are unequal in time.

Conventions (line idles high):
  Manchester   bit 0 -> chips (1,0), bit 1 -> chips (0,1)
  PIE          bit 0 -> (1,0) equal durations, bit 1 -> (1,0) with the
               high chip `pie_high_ratio` times longer
  FM0          level inverts at every bit boundary, and mid-bit for a 0
  Miller       level inverts mid-bit for a 1 and at the boundary between
               consecutive 0s, then the whole stream is chipped with a
               square subcarrier of `factor` cycles per bit
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyInput, LengthMismatch, UnsupportedScheme

PIE_HIGH_RATIO = 2.0  # bit-1 high-chip duration over low-chip duration


class LineScheme(Enum):
    MANCHESTER = "manchester"
    PIE = "pie"
    FM0 = "fm0"
    MILLER2 = "miller2"
    MILLER4 = "miller4"
    MILLER8 = "miller8"
    NONE = "none"

    @property
    def miller_factor(self) -> int:
        return {"miller2": 2, "miller4": 4, "miller8": 8}[self.value]

    @property
    def chips_per_bit(self) -> int:
        if self in (LineScheme.MANCHESTER, LineScheme.PIE, LineScheme.FM0):
            return 2
        if self is LineScheme.NONE:
            return 1
        return 2 * self.miller_factor


@dataclass
class ChipSeq:
    """Binary chips plus timing: uniform chip_duration_s, or per-chip
    durations_s for PIE."""

    chips: np.ndarray
    chip_duration_s: float = 1.0
    durations_s: np.ndarray | None = None

    def __post_init__(self):
        self.chips = np.asarray(self.chips, dtype=np.uint8).ravel()
        if self.chip_duration_s <= 0:
            raise ValueError("chip_duration_s must be positive")

    def __len__(self) -> int:
        return self.chips.size


_MANCHESTER_CODE = np.array([[1, 0], [0, 1]], dtype=np.uint8)


def _encode_fm0(bits: np.ndarray) -> np.ndarray:
    out = np.empty(2 * bits.size, dtype=np.uint8)
    level = 1
    for i, b in enumerate(bits.tolist()):
        first = 1 - level
        second = first if b else 1 - first
        out[2 * i] = first
        out[2 * i + 1] = second
        level = second
    return out


def _encode_miller_base(bits: np.ndarray) -> np.ndarray:
    """Half-bit levels before subcarrier chipping."""
    halves = np.empty(2 * bits.size, dtype=np.uint8)
    level = 1
    prev_bit = None
    for i, b in enumerate(bits.tolist()):
        first = 1 - level if (prev_bit == 0 and b == 0) else level
        second = 1 - first if b else first
        halves[2 * i] = first
        halves[2 * i + 1] = second
        level = second
        prev_bit = b
    return halves


def line_encode(bits, scheme: LineScheme, chip_duration_s: float = 1.0) -> ChipSeq:
    """Encode bits into chips under the given scheme."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        raise EmptyInput("no bits to encode")
    if scheme is LineScheme.NONE:
        raise UnsupportedScheme("scheme NONE has no chip mapping")

    if scheme is LineScheme.MANCHESTER:
        chips = _MANCHESTER_CODE[bits].ravel()
        return ChipSeq(chips, chip_duration_s)

    if scheme is LineScheme.PIE:
        chips = np.tile(np.array([1, 0], dtype=np.uint8), bits.size)
        durations = np.empty(2 * bits.size)
        durations[0::2] = np.where(bits == 1, PIE_HIGH_RATIO, 1.0) * chip_duration_s
        durations[1::2] = chip_duration_s
        return ChipSeq(chips, chip_duration_s, durations_s=durations)

    if scheme is LineScheme.FM0:
        return ChipSeq(_encode_fm0(bits), chip_duration_s)

    # Miller: chip the half-bit levels with the square subcarrier
    m = scheme.miller_factor
    halves = _encode_miller_base(bits)
    levels = np.repeat(halves, m)
    sq = (np.arange(levels.size) % 2).astype(np.uint8)
    return ChipSeq(levels ^ sq, chip_duration_s)


def _decode_manchester(chips: np.ndarray) -> tuple[np.ndarray, int]:
    pairs = chips.reshape(-1, 2)
    # invalid pairs decode by the second chip: (1,1)->1, (0,0)->0
    violations = int(np.count_nonzero(pairs[:, 0] == pairs[:, 1]))
    return pairs[:, 1].copy(), violations


def _decode_fm0(chips: np.ndarray) -> tuple[np.ndarray, int]:
    pairs = chips.reshape(-1, 2)
    bits = (pairs[:, 0] == pairs[:, 1]).astype(np.uint8)
    # boundary rule: the first chip must invert the previous line level
    prev = np.empty(pairs.shape[0], dtype=np.uint8)
    prev[0] = 1
    prev[1:] = pairs[:-1, 1]
    violations = int(np.count_nonzero(pairs[:, 0] == prev))
    return bits, violations


def _decode_miller(chips: np.ndarray, m: int) -> tuple[np.ndarray, int]:
    sq = (np.arange(chips.size) % 2).astype(np.uint8)
    raw = (chips ^ sq).reshape(-1, m)
    ones = raw.sum(axis=1)
    halves = (2 * ones >= m).astype(np.uint8)  # majority, ties -> 1
    violations = int(np.minimum(ones, m - ones).sum())
    h = halves.reshape(-1, 2)
    bits = (h[:, 0] != h[:, 1]).astype(np.uint8)
    level = 1
    prev_bit = None
    for i, b in enumerate(bits.tolist()):
        expect = 1 - level if (prev_bit == 0 and b == 0) else level
        if h[i, 0] != expect:
            violations += 1
        level = h[i, 1]
        prev_bit = b
    return bits, violations


def _decode_pie(seq: ChipSeq) -> tuple[np.ndarray, int]:
    if seq.durations_s is None:
        raise LengthMismatch("PIE decode requires per-chip durations")
    d = seq.durations_s.reshape(-1, 2)
    bits = (d[:, 0] > d[:, 1] * 1.0001).astype(np.uint8)
    pairs = seq.chips.reshape(-1, 2)
    violations = int(np.count_nonzero((pairs[:, 0] != 1) | (pairs[:, 1] != 0)))
    return bits, violations


def line_decode(seq: ChipSeq, scheme: LineScheme) -> tuple[np.ndarray, int]:
    """Decode chips back to bits.

    Returns (bits, violation_count) where violations count codewords that
    broke the scheme's transition rules and were resolved by the
    maximum-likelihood tie-break.
    """
    chips = seq.chips
    if chips.size == 0:
        raise EmptyInput("no chips to decode")
    if scheme is LineScheme.NONE:
        raise UnsupportedScheme("scheme NONE has no chip mapping")
    if chips.size % scheme.chips_per_bit:
        raise LengthMismatch(
            f"{chips.size} chips not a multiple of {scheme.chips_per_bit} for {scheme.value}"
        )

    if scheme is LineScheme.MANCHESTER:
        return _decode_manchester(chips)
    if scheme is LineScheme.PIE:
        return _decode_pie(seq)
    if scheme is LineScheme.FM0:
        return _decode_fm0(chips)
    return _decode_miller(chips, scheme.miller_factor)
