"""PDRCH transmitter: D-TAS, CRC, repetition, FEC, line coding, small
frequency shift, midambles and baseband modulation.

The device transmits at a fixed chip rate (7.5 kchips/s for the 15 kHz
transmission bandwidth).  With the small shift enabled every data bit
spans 2R chips, giving a baseband tone at 1/(2 * chip length) Hz that
separates devices spectrally; both shift options produce the same chip
budget.  Midambles are known 8-chip words inserted at bit boundaries;
the receiver only excises them (no estimation is performed here).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bits import CrcPolicy, crc_attach, select_crc
from .errors import ConfigError, EmptyInput, LengthMismatch, PayloadTooLong, UnsupportedScheme
from .fec import ConvCode, RepeatMode, conv_encode, repeat
from .linecode import ChipSeq, LineScheme, line_encode
from .r2d_tx import TBS_FIELD_BITS, FrameEnding
from .signal import BasebandSignal

MIDAMBLE = np.array([1, 0, 0, 1, 0, 1, 1, 0], dtype=np.uint8)
D2R_POSTAMBLE = np.array([0, 0, 1, 1], dtype=np.uint8)
DEFAULT_CHIP_RATE = 7500.0

# Fibonacci LFSR feedback taps (1-based exponents) for the m-sequence
# families; each pair is a preferred pair so XOR combinations form Gold
# codes with three-valued cross-correlation.
_PREFERRED_PAIRS = {
    31: ((5, 2), (5, 4, 3, 2)),
    63: ((6, 1), (6, 5, 2, 1)),
}


class D2rModulation(Enum):
    OOK = "ook"
    BPSK = "bpsk"
    MSK = "msk"


class ShiftOption(Enum):
    REPEAT_CODEWORD = "repeat-codeword"
    SQUARE_WAVE = "square-wave"


@dataclass
class D2rSchedule:
    """Scheduling information the reader grants for one PDRCH burst."""

    tbs: int
    chip_rate_cps: float = DEFAULT_CHIP_RATE
    line: LineScheme = LineScheme.MANCHESTER
    modulation: D2rModulation = D2rModulation.OOK
    fec: ConvCode | None = None
    repetition_pre_fec: int = 1
    repetition_post_fec: int = 1
    repetition_mode: RepeatMode = RepeatMode.BIT
    shift_R: int = 0  # 0 disables the small frequency shift
    shift_option: ShiftOption = ShiftOption.REPEAT_CODEWORD
    midamble_period_bits: int | None = None
    ending: FrameEnding = FrameEnding.POSTAMBLE
    dtas_length: int = 31
    dtas_device_index: int = 0
    crc_policy: CrcPolicy = field(default_factory=CrcPolicy)

    def __post_init__(self):
        if not 1 <= self.tbs <= 1000:
            raise PayloadTooLong(f"TBS {self.tbs} outside [1, 1000]")
        if self.chip_rate_cps <= 0:
            raise ConfigError("chip rate must be positive")
        if self.shift_R < 0:
            raise ConfigError("shift_R must be >= 0")
        if self.shift_R and self.line not in (LineScheme.MANCHESTER, LineScheme.NONE):
            raise UnsupportedScheme("small shift requires Manchester or no line code")
        if min(self.repetition_pre_fec, self.repetition_post_fec) < 1:
            raise ConfigError("repetition factors must be >= 1")
        if self.midamble_period_bits is not None and self.midamble_period_bits < 1:
            raise ConfigError("midamble period must be >= 1 bit")

    @property
    def chip_duration_s(self) -> float:
        return 1.0 / self.chip_rate_cps

    @property
    def chips_per_bit(self) -> int:
        """Chips per line-coded data bit after the optional small shift."""
        if self.shift_R:
            return 2 * self.shift_R
        if self.line is LineScheme.NONE:
            return 1
        return self.line.chips_per_bit

    def samples_per_chip(self, sample_rate_hz: float) -> int:
        spc = sample_rate_hz / self.chip_rate_cps
        if abs(spc - round(spc)) > 1e-9 or spc < 2:
            raise ConfigError(
                f"sample rate {sample_rate_hz} not an integer multiple >= 2 of the chip rate")
        return int(round(spc))


@dataclass
class Dtas:
    """Device timing-acquisition sequence."""

    sequence: ChipSeq

    @property
    def chips(self) -> np.ndarray:
        return self.sequence.chips


def _m_sequence(taps: tuple[int, ...], length: int) -> np.ndarray:
    degree = max(taps)
    reg = [1] * degree
    out = np.empty(length, dtype=np.uint8)
    for i in range(length):
        out[i] = reg[-1]
        fb = 0
        for t in taps:
            fb ^= reg[t - 1]
        reg = [fb] + reg[:-1]
    return out


def build_dtas(length: int, device_index: int = 0,
               chip_duration_s: float = 1.0 / DEFAULT_CHIP_RATE) -> Dtas:
    """Deterministic per-device binary sequence with bounded correlation.

    Index 0 and 1 are the two preferred m-sequences; higher indices are
    their Gold combinations (XOR with cyclic shifts).
    """
    if length < 31:
        raise LengthMismatch(f"D-TAS length {length} below the 31-chip minimum")
    if length not in _PREFERRED_PAIRS:
        raise ConfigError(f"unsupported D-TAS length {length} (available: 31, 63)")
    if not 0 <= device_index <= length + 1:
        raise ConfigError(f"device index {device_index} outside the family of {length + 2}")
    taps_a, taps_b = _PREFERRED_PAIRS[length]
    a = _m_sequence(taps_a, length)
    b = _m_sequence(taps_b, length)
    if device_index == 0:
        seq = a
    elif device_index == 1:
        seq = b
    else:
        seq = a ^ np.roll(b, device_index - 2)
    return Dtas(ChipSeq(seq, chip_duration_s))


def apply_small_shift(chips: ChipSeq, sched: D2rSchedule) -> ChipSeq:
    """Expand each data bit to 2R chips carrying the shift tone.

    REPEAT_CODEWORD repeats every Manchester codeword R times within the
    bit; SQUARE_WAVE stretches the codeword and XORs a square wave with
    R periods per bit.  Without line coding only SQUARE_WAVE applies.
    """
    if sched.shift_R < 1:
        raise ConfigError("shift_R must be >= 1 to apply the small shift")
    r = sched.shift_R
    arr = chips.chips

    if sched.line is LineScheme.MANCHESTER:
        if arr.size % 2:
            raise LengthMismatch("Manchester chip stream must pair into codewords")
        pairs = arr.reshape(-1, 2)
        if sched.shift_option is ShiftOption.REPEAT_CODEWORD:
            out = np.tile(pairs, (1, r)).ravel()
        else:
            stretched = np.repeat(pairs, r, axis=1).ravel()
            sq = (np.arange(stretched.size) % 2).astype(np.uint8)
            out = stretched ^ sq
        return ChipSeq(out, chips.chip_duration_s)

    if sched.line is LineScheme.NONE:
        stretched = np.repeat(arr, 2 * r)
        sq = (np.arange(stretched.size) % 2).astype(np.uint8)
        return ChipSeq(stretched ^ sq, chips.chip_duration_s)

    raise UnsupportedScheme(f"small shift undefined for {sched.line.value}")


def baseband_modulate(chips: ChipSeq, modulation: D2rModulation,
                      sample_rate_hz: float,
                      chip_rate_cps: float = DEFAULT_CHIP_RATE) -> BasebandSignal:
    """Map chips to baseband samples at a constant samples-per-chip."""
    spc = sample_rate_hz / chip_rate_cps
    if abs(spc - round(spc)) > 1e-9 or spc < 2:
        raise ConfigError("sample rate must be an integer multiple >= 2 of the chip rate")
    spc = int(round(spc))
    arr = chips.chips
    if arr.size == 0:
        raise EmptyInput("no chips to modulate")

    if modulation is D2rModulation.OOK:
        samples = np.repeat(arr.astype(np.complex128), spc)
    elif modulation is D2rModulation.BPSK:
        samples = np.repeat((2.0 * arr - 1.0).astype(np.complex128), spc)
    else:  # MSK: continuous phase, +/- pi/2 per chip
        inc = np.repeat(np.where(arr == 1, 1.0, -1.0) * (np.pi / 2) / spc, spc)
        phase = np.concatenate([[0.0], np.cumsum(inc)[:-1]])
        samples = np.exp(1j * phase)
    return BasebandSignal(samples, sample_rate_hz)


@dataclass
class D2rFrame:
    """Chip-level layout of one PDRCH burst."""

    tbs: int
    crc_bits: int
    n_coded_bits: int      # bits entering line coding
    chips_per_bit: int
    n_dtas_chips: int
    n_data_chips: int      # line-coded + shifted data, midambles excluded
    midamble_chip_positions: tuple[int, ...]  # start offsets within the payload stream
    n_postamble_chips: int
    total_chips: int


def _coded_bit_count(sched: D2rSchedule) -> tuple[int, int]:
    field_bits = TBS_FIELD_BITS if sched.ending is FrameEnding.TBS_IN_CONTROL else 0
    crc = select_crc(sched.tbs + field_bits, sched.crc_policy)
    n = sched.tbs + field_bits + crc.length
    n *= sched.repetition_pre_fec
    if sched.fec is not None:
        n *= sched.fec.n_outputs
    n *= sched.repetition_post_fec
    return n, crc.length


def _midamble_insertion_points(n_bits: int, period: int | None) -> tuple[int, ...]:
    if period is None or n_bits <= period:
        return ()
    points = []
    pos = period
    while pos < n_bits:
        points.append(pos)
        pos += period
    return tuple(points)


def d2r_frame_layout(sched: D2rSchedule) -> D2rFrame:
    n_bits, crc_bits = _coded_bit_count(sched)
    cpb = sched.chips_per_bit
    inserts = _midamble_insertion_points(n_bits, sched.midamble_period_bits)
    data_chips = n_bits * cpb
    positions = tuple(p * cpb + i * MIDAMBLE.size for i, p in enumerate(inserts))
    post = D2R_POSTAMBLE.size if sched.ending is FrameEnding.POSTAMBLE else 0
    total = sched.dtas_length + data_chips + len(inserts) * MIDAMBLE.size + post
    return D2rFrame(
        tbs=sched.tbs, crc_bits=crc_bits, n_coded_bits=n_bits, chips_per_bit=cpb,
        n_dtas_chips=sched.dtas_length, n_data_chips=data_chips,
        midamble_chip_positions=positions, n_postamble_chips=post, total_chips=total,
    )


def pdrch_chips(tb: np.ndarray, sched: D2rSchedule) -> np.ndarray:
    """Payload chip stream: CRC, repetition, FEC, line code, shift,
    midambles and postamble (D-TAS excluded)."""
    tb = np.asarray(tb, dtype=np.uint8).ravel()
    if tb.size != sched.tbs:
        raise LengthMismatch(f"TB has {tb.size} bits, schedule says {sched.tbs}")
    bits = tb
    if sched.ending is FrameEnding.TBS_IN_CONTROL:
        fbits = ((tb.size >> np.arange(TBS_FIELD_BITS - 1, -1, -1)) & 1).astype(np.uint8)
        bits = np.concatenate([fbits, tb])
    framed = crc_attach(bits, select_crc(bits.size, sched.crc_policy))
    if sched.repetition_pre_fec > 1:
        framed = repeat(framed, sched.repetition_pre_fec, sched.repetition_mode)
    if sched.fec is not None:
        framed = conv_encode(framed, sched.fec)
    if sched.repetition_post_fec > 1:
        framed = repeat(framed, sched.repetition_post_fec, sched.repetition_mode)

    if sched.line is LineScheme.NONE:
        chips = ChipSeq(framed, sched.chip_duration_s)
    else:
        chips = line_encode(framed, sched.line, sched.chip_duration_s)
    if sched.shift_R:
        chips = apply_small_shift(chips, sched)

    cpb = sched.chips_per_bit
    inserts = _midamble_insertion_points(framed.size, sched.midamble_period_bits)
    segments, prev = [], 0
    for p in inserts:
        segments.extend([chips.chips[prev * cpb: p * cpb], MIDAMBLE])
        prev = p
    segments.append(chips.chips[prev * cpb:])
    if sched.ending is FrameEnding.POSTAMBLE:
        segments.append(D2R_POSTAMBLE)
    return np.concatenate(segments)


def assemble_pdrch(tb: np.ndarray, sched: D2rSchedule,
                   sample_rate_hz: float = 1.92e6) -> BasebandSignal:
    """D-TAS followed by the modulated PDRCH payload.

    The D-TAS is always on/off keyed so the reader can envelope-correlate
    it regardless of the payload modulation.
    """
    dtas = build_dtas(sched.dtas_length, sched.dtas_device_index, sched.chip_duration_s)
    payload = pdrch_chips(tb, sched)
    head = baseband_modulate(dtas.sequence, D2rModulation.OOK,
                             sample_rate_hz, sched.chip_rate_cps)
    body = baseband_modulate(ChipSeq(payload, sched.chip_duration_s), sched.modulation,
                             sample_rate_hz, sched.chip_rate_cps)
    return BasebandSignal(np.concatenate([head.samples[0], body.samples[0]]),
                          sample_rate_hz)
