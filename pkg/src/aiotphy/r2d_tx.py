"""PRDCH transmitter: timing-acquisition signal, OOK over DFT-s-OFDM,
frame assembly and data-rate accounting.

One OFDM symbol carries M chips: the M chips are expanded to the 12
scheduled subcarrier positions in time, DFT-spread, mapped onto a
contiguous block of the IFFT grid and converted to time domain, so the
symbol envelope follows the chip on/off pattern.  The cyclic prefix is
filled with a copy of the symbol head so it extends the first chip's
level and never introduces a spurious envelope edge; the chip grid is
defined on the CP-stripped stream.

A `decimation` factor generates the identical waveform on a proportionally
smaller IFFT grid (e.g. 128-point at 1.92 Msps instead of 4096-point at
61.44 Msps).  The result equals the full-rate signal decimated sample by
sample, which keeps Monte-Carlo trials cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bits import CrcPolicy, crc_attach, select_crc
from .errors import ConfigError, EmptyInput, LengthMismatch, PayloadTooLong
from .linecode import ChipSeq, LineScheme, line_encode
from .signal import BasebandSignal

# fixed on/off patterns, chosen to be distinguishable from idle and from
# Manchester traffic (which never spans a bit boundary with a 2-chip run)
START_INDICATOR = np.array([1, 1, 1, 0, 1, 0, 0, 1], dtype=np.uint8)
CLOCK_ACQUISITION = np.array([1, 0, 1, 0, 1, 0], dtype=np.uint8)
POSTAMBLE = np.array([0, 0, 1, 1], dtype=np.uint8)
TBS_FIELD_BITS = 10

# normal CP at 61.44 Msps: long on the first symbol of each half-subframe
CP_LONG = 320
CP_SHORT = 288
SYMBOLS_PER_HALF_SUBFRAME = 7
SUBCARRIER_OFFSET = 1  # first occupied IFFT bin


class FrameEnding(Enum):
    POSTAMBLE = "postamble"
    TBS_IN_CONTROL = "tbs-in-control"


@dataclass
class R2dConfig:
    scs_hz: float = 15e3
    m_chips_per_symbol: int = 1
    n_subcarriers: int = 12
    fft_size: int = 4096
    tx_sample_rate_hz: float = 61.44e6
    ending: FrameEnding = FrameEnding.POSTAMBLE
    crc_policy: CrcPolicy = field(default_factory=CrcPolicy)

    def __post_init__(self):
        if self.m_chips_per_symbol not in (1, 2, 4):
            raise ConfigError(f"M must be 1, 2 or 4, got {self.m_chips_per_symbol}")
        if self.n_subcarriers % self.m_chips_per_symbol:
            raise ConfigError("n_subcarriers must be divisible by M")
        if abs(self.tx_sample_rate_hz - self.fft_size * self.scs_hz) > 1e-6:
            raise ConfigError("tx_sample_rate_hz must equal fft_size * scs_hz")

    @property
    def chip_duration_s(self) -> float:
        return 1.0 / (self.m_chips_per_symbol * self.scs_hz)

    def samples_per_chip(self, decimation: int = 1) -> int:
        return self.fft_size // decimation // self.m_chips_per_symbol

    def cp_lengths(self, n_symbols: int, decimation: int = 1,
                   start_symbol: int = 0) -> np.ndarray:
        idx = np.arange(start_symbol, start_symbol + n_symbols)
        cps = np.where(idx % SYMBOLS_PER_HALF_SUBFRAME == 0, CP_LONG, CP_SHORT)
        return cps // decimation


@dataclass
class Rtas:
    """Reader timing-acquisition signal: start indicator plus a clock
    pattern whose edge spacing equals one chip duration."""

    start_indicator: ChipSeq
    clock_acquisition: ChipSeq

    @property
    def chips(self) -> np.ndarray:
        return np.concatenate([self.start_indicator.chips, self.clock_acquisition.chips])

    @property
    def n_chips(self) -> int:
        return self.chips.size


def build_rtas(cfg: R2dConfig) -> Rtas:
    dur = cfg.chip_duration_s
    return Rtas(ChipSeq(START_INDICATOR.copy(), dur), ChipSeq(CLOCK_ACQUISITION.copy(), dur))


def _pad_to_symbols(chips: np.ndarray, m: int) -> np.ndarray:
    rem = (-chips.size) % m
    if rem:
        chips = np.concatenate([chips, np.zeros(rem, dtype=np.uint8)])
    return chips


def ook_modulate(chips: ChipSeq | np.ndarray, cfg: R2dConfig, decimation: int = 1,
                 start_symbol: int = 0) -> BasebandSignal:
    """Chips -> DFT-spread OOK OFDM waveform with cyclic prefixes."""
    arr = chips.chips if isinstance(chips, ChipSeq) else np.asarray(chips, dtype=np.uint8)
    m = cfg.m_chips_per_symbol
    if arr.size == 0:
        raise EmptyInput("no chips to modulate")
    if arr.size % m:
        raise LengthMismatch(f"{arr.size} chips not divisible by M={m}")
    fft = cfg.fft_size // decimation
    n_sc = cfg.n_subcarriers

    per_symbol = arr.reshape(-1, m)
    td = np.repeat(per_symbol, n_sc // m, axis=1).astype(np.float64)
    spread = np.fft.fft(td, axis=1)
    grid = np.zeros((per_symbol.shape[0], fft), dtype=np.complex128)
    # centered mapping: the pattern's negative-frequency DFT outputs sit
    # below the block center so the envelope follows the chip levels
    grid[:, SUBCARRIER_OFFSET:SUBCARRIER_OFFSET + n_sc] = np.fft.fftshift(spread, axes=1)
    symbols = np.fft.ifft(grid, axis=1) * (fft / n_sc)

    out = _insert_cp(symbols, cfg, decimation, start_symbol)
    return BasebandSignal(out, cfg.tx_sample_rate_hz / decimation)


def _insert_cp(symbols: np.ndarray, cfg: R2dConfig, decimation: int,
               start_symbol: int) -> np.ndarray:
    """Prepend each symbol's CP (a copy of its head, so the CP carries the
    first chip's level).  Vectorized scatter per CP-length group."""
    n_sym, fft = symbols.shape
    cps = cfg.cp_lengths(n_sym, decimation, start_symbol)
    starts = np.concatenate([[0], np.cumsum(cps + fft)])
    out = np.empty(int(starts[-1]), dtype=symbols.dtype)
    body_idx = (starts[:-1] + cps)[:, None] + np.arange(fft)[None, :]
    out[body_idx.ravel()] = symbols.ravel()
    for cp in np.unique(cps):
        rows = np.flatnonzero(cps == cp)
        cp_idx = starts[rows][:, None] + np.arange(cp)[None, :]
        out[cp_idx.ravel()] = symbols[rows, :cp].ravel()
    return out


def chip_level_profile(chips: np.ndarray, cfg: R2dConfig, decimation: int = 1,
                       start_symbol: int = 0) -> np.ndarray:
    """Nominal per-sample on/off level of the modulated chip stream,
    including the CP regions (which repeat the symbol-head levels)."""
    arr = _pad_to_symbols(np.asarray(chips, dtype=np.uint8), cfg.m_chips_per_symbol)
    spc = cfg.samples_per_chip(decimation)
    per_symbol = arr.reshape(-1, cfg.m_chips_per_symbol)
    levels = np.repeat(per_symbol, spc, axis=1).astype(np.float64)
    return _insert_cp(levels, cfg, decimation, start_symbol)


@dataclass
class R2dFrame:
    """Chip-level layout of one PRDCH transmission."""

    tb_bits: int
    crc_bits: int
    n_rtas_chips: int
    n_payload_chips: int
    n_postamble_chips: int
    total_chips: int          # padded to a whole number of symbols
    total_symbols: int

    @property
    def payload_start_chip(self) -> int:
        return self.n_rtas_chips


def frame_layout(cfg: R2dConfig, tbs: int) -> R2dFrame:
    crc = select_crc(tbs + (TBS_FIELD_BITS if cfg.ending is FrameEnding.TBS_IN_CONTROL else 0),
                     cfg.crc_policy)
    frame_bits = tbs + crc.length
    if cfg.ending is FrameEnding.TBS_IN_CONTROL:
        frame_bits += TBS_FIELD_BITS
    payload_chips = 2 * frame_bits
    post = POSTAMBLE.size if cfg.ending is FrameEnding.POSTAMBLE else 0
    raw = START_INDICATOR.size + CLOCK_ACQUISITION.size + payload_chips + post
    m = cfg.m_chips_per_symbol
    total = raw + ((-raw) % m)
    return R2dFrame(
        tb_bits=tbs, crc_bits=crc.length,
        n_rtas_chips=START_INDICATOR.size + CLOCK_ACQUISITION.size,
        n_payload_chips=payload_chips, n_postamble_chips=post,
        total_chips=total, total_symbols=total // m,
    )


def prdch_chips(tb: np.ndarray, cfg: R2dConfig) -> np.ndarray:
    """Line-coded PRDCH payload chips (CRC attached, Manchester)."""
    tb = np.asarray(tb, dtype=np.uint8).ravel()
    if tb.size == 0:
        raise EmptyInput("empty transport block")
    if tb.size > 1000:
        raise PayloadTooLong(f"TBS {tb.size} > 1000")
    bits = tb
    if cfg.ending is FrameEnding.TBS_IN_CONTROL:
        field_bits = ((tb.size >> np.arange(TBS_FIELD_BITS - 1, -1, -1)) & 1).astype(np.uint8)
        bits = np.concatenate([field_bits, tb])
    framed = crc_attach(bits, select_crc(bits.size, cfg.crc_policy))
    return line_encode(framed, LineScheme.MANCHESTER, cfg.chip_duration_s).chips


def assemble_prdch(tb: np.ndarray, cfg: R2dConfig, decimation: int = 1) -> BasebandSignal:
    """Full frame: R-TAS, line-coded PRDCH, postamble, OOK-modulated."""
    rtas = build_rtas(cfg)
    parts = [rtas.chips, prdch_chips(tb, cfg)]
    if cfg.ending is FrameEnding.POSTAMBLE:
        parts.append(POSTAMBLE)
    chips = _pad_to_symbols(np.concatenate(parts), cfg.m_chips_per_symbol)
    return ook_modulate(chips, cfg, decimation)


def r2d_data_rate(tb_bits: int, crc_bits: int, total_ofdm_symbols: int) -> float:
    """Effective bits per OFDM symbol: CRC overhead and signalling
    symbols count against the rate."""
    if total_ofdm_symbols < 1:
        raise ConfigError("total_ofdm_symbols must be >= 1")
    return tb_bits / total_ofdm_symbols
