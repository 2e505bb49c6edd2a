"""Reader-side PDRCH receiver.

D-TAS correlation for burst start, equal-gain combining over receive
antennas, non-coherent per-chip statistics (mean over the 256 samples of
a chip) with a sliding 4-chip adaptive threshold, small-shift
recombination, soft Manchester decisions, repetition combining, Viterbi
and CRC decode.

The chain is non-coherent: it demodulates OOK bursts.  BPSK and MSK
exist as transmit options for waveform experiments; decoding them would
need the coherent reception that is out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import fftconvolve

from .bits import crc_check, select_crc
from .d2r_tx import (
    D2R_POSTAMBLE,
    MIDAMBLE,
    D2rSchedule,
    Dtas,
    build_dtas,
    d2r_frame_layout,
)
from .errors import BlockError, EmptyInput, LengthMismatch, MalformedFrame, SyncError
from .fec import RepeatMode, hard_to_soft, viterbi_decode
from .linecode import ChipSeq, LineScheme, line_decode
from .r2d_tx import TBS_FIELD_BITS, FrameEnding
from .signal import BasebandSignal, EnvelopeSignal

# constant-false-alarm sync rule: z = rho * sqrt(template length) is
# ~N(0,1) per lag under noise-only input
SYNC_Z_FLOOR = 5.0
ADAPTIVE_WINDOW_CHIPS = 4


class CombineMethod(Enum):
    AVERAGE = "average"
    MAJORITY = "majority"
    SOFT_SUM = "soft-sum"


@dataclass
class D2rDetection:
    """Detector output: soft and hard data chips, overhead removed."""

    start_sample: int
    soft_chips: np.ndarray
    hard_chips: np.ndarray


def egc_combine(rx: BasebandSignal) -> EnvelopeSignal:
    """Equal-gain combining: average of per-antenna magnitudes."""
    if rx.n_antennas > 2:
        raise LengthMismatch("EGC supports 1 or 2 antenna streams")
    return EnvelopeSignal(np.abs(rx.samples).mean(axis=0), rx.sample_rate_hz)


def locate_dtas(rx: BasebandSignal, dtas: Dtas, chip_rate_cps: float = 7500.0,
                search_window: int | None = None) -> int:
    """Start sample maximizing the normalized correlation of |rx| against
    the D-TAS envelope.  Raises SyncError below the detection floor."""
    if rx.n_samples == 0:
        raise EmptyInput("empty signal")
    env = np.abs(rx.samples).mean(axis=0)
    spc = int(round(rx.sample_rate_hz / chip_rate_cps))
    template = np.repeat(dtas.chips.astype(np.float64), spc)
    L = template.size
    n_lags = env.size - L + 1
    if n_lags < 1:
        raise SyncError("signal shorter than the D-TAS")
    if search_window is not None:
        n_lags = min(n_lags, search_window)

    tz = template - template.mean()
    tnorm = np.sqrt((tz ** 2).sum())
    window = env[: n_lags + L - 1]
    dots = fftconvolve(window, tz[::-1], mode="valid")
    csum = np.cumsum(np.concatenate([[0.0], window]))
    csum2 = np.cumsum(np.concatenate([[0.0], window ** 2]))
    seg_sum = csum[L:L + n_lags] - csum[:n_lags]
    seg_sq = csum2[L:L + n_lags] - csum2[:n_lags]
    var = np.maximum(seg_sq - seg_sum ** 2 / L, 1e-30)
    corr = dots[:n_lags] / (tnorm * np.sqrt(var))
    lag = int(np.argmax(corr))
    if corr[lag] * np.sqrt(L) < SYNC_Z_FLOOR:
        raise SyncError("D-TAS not found: correlation below floor")
    return lag


def detect_d2r(env: EnvelopeSignal, sched: D2rSchedule, n_chips: int | None = None,
               start_sample: int = 0) -> D2rDetection:
    """Per-chip statistics and adaptive-threshold decisions.

    `n_chips` counts the payload chips after the D-TAS (defaults to the
    scheduled layout); midambles and the postamble are excised from the
    returned chips at their known positions.
    """
    layout = d2r_frame_layout(sched)
    if n_chips is None:
        n_chips = layout.total_chips - layout.n_dtas_chips
    spc = sched.samples_per_chip(env.sample_rate_hz)
    total = layout.n_dtas_chips + n_chips
    if start_sample + total * spc > env.values.size:
        raise LengthMismatch("envelope too short for the scheduled burst")

    region = env.values[start_sample: start_sample + total * spc]
    stats = region.reshape(total, spc).mean(axis=1)

    # sliding causal window over all chips; the D-TAS chips provide the
    # warm-up context for the first payload chips
    w = ADAPTIVE_WINDOW_CHIPS
    csum = np.cumsum(np.concatenate([[0.0], stats]))
    k = np.arange(total)
    lo = np.maximum(0, k - w + 1)
    thresholds = (csum[k + 1] - csum[lo]) / (k + 1 - lo)
    thresholds[: w - 1] = stats[:w].mean() if total >= w else stats.mean()

    soft = (stats - thresholds)[layout.n_dtas_chips:]
    keep = np.ones(n_chips, dtype=bool)
    for p in layout.midamble_chip_positions:
        if p + MIDAMBLE.size <= n_chips:
            keep[p: p + MIDAMBLE.size] = False
    if layout.n_postamble_chips and n_chips >= layout.n_postamble_chips:
        keep[n_chips - layout.n_postamble_chips:] = False
    soft = soft[keep]
    hard = (soft > 0).astype(np.uint8)
    return D2rDetection(start_sample=start_sample, soft_chips=soft, hard_chips=hard)


def combine_repetitions(soft, factor: int, method: CombineMethod = CombineMethod.SOFT_SUM,
                        mode: RepeatMode = RepeatMode.BIT) -> np.ndarray:
    """Collapse `factor` repeated copies back to one soft value each."""
    soft = np.asarray(soft, dtype=np.float64).ravel()
    if factor < 1:
        raise LengthMismatch("factor must be >= 1")
    if soft.size % factor:
        raise LengthMismatch(f"{soft.size} values not divisible by factor {factor}")
    if factor == 1:
        return soft.copy()
    if mode is RepeatMode.BIT:
        groups = soft.reshape(-1, factor)
    else:
        groups = soft.reshape(factor, -1).T
    if method is CombineMethod.AVERAGE:
        return groups.mean(axis=1)
    if method is CombineMethod.SOFT_SUM:
        return groups.sum(axis=1)
    votes = np.sign(groups).sum(axis=1)
    return np.where(votes >= 0, 1.0, -1.0)


def _undo_small_shift(soft: np.ndarray, sched: D2rSchedule) -> np.ndarray:
    """Recombine the 2R shifted chips of every bit into codeword sums."""
    r = sched.shift_R
    if soft.size % (2 * r):
        raise MalformedFrame("shifted stream not a whole number of bits")
    # square-wave chips were XORed with sq = (index % 2): even-index
    # chips keep their sense, odd-index chips are inverted
    sq_sign = 1.0 - 2.0 * (np.arange(soft.size) % 2)
    if sched.line is LineScheme.MANCHESTER:
        from .d2r_tx import ShiftOption
        if sched.shift_option is ShiftOption.REPEAT_CODEWORD:
            return soft.reshape(-1, r, 2).sum(axis=1).ravel()
        corrected = soft * sq_sign
        return corrected.reshape(-1, 2, r).sum(axis=2).ravel()
    # no line code: R square-wave periods per bit
    corrected = soft * sq_sign
    return corrected.reshape(-1, 2 * r).sum(axis=1)


def _soft_bits(soft_chips: np.ndarray, sched: D2rSchedule) -> np.ndarray:
    """Per-bit soft metrics, positive = bit 0 (the FEC convention)."""
    if sched.shift_R:
        pair_sums = _undo_small_shift(soft_chips, sched)
        if sched.line is LineScheme.MANCHESTER:
            pairs = pair_sums.reshape(-1, 2)
            return pairs[:, 0] - pairs[:, 1]
        return -pair_sums
    if sched.line is LineScheme.NONE:
        return -soft_chips
    if sched.line is LineScheme.MANCHESTER:
        if soft_chips.size % 2:
            raise MalformedFrame("odd Manchester chip count")
        pairs = soft_chips.reshape(-1, 2)
        return pairs[:, 0] - pairs[:, 1]
    # FM0/Miller: hard-decision line decode
    hard = (soft_chips > 0).astype(np.uint8)
    bits, _ = line_decode(ChipSeq(hard, sched.chip_duration_s), sched.line)
    return hard_to_soft(bits)


def decode_pdrch(det: D2rDetection, sched: D2rSchedule) -> np.ndarray:
    """Invert the transmit pipeline from soft chips to the transport block."""
    soft = _soft_bits(det.soft_chips, sched)

    if sched.repetition_post_fec > 1:
        soft = combine_repetitions(soft, sched.repetition_post_fec,
                                   CombineMethod.SOFT_SUM, sched.repetition_mode)
    field_bits = TBS_FIELD_BITS if sched.ending is FrameEnding.TBS_IN_CONTROL else 0
    crc = select_crc(sched.tbs + field_bits, sched.crc_policy)
    msg_len = (sched.tbs + field_bits + crc.length) * sched.repetition_pre_fec
    if sched.fec is not None:
        if soft.size != msg_len * sched.fec.n_outputs:
            raise MalformedFrame(
                f"{soft.size} coded bits, expected {msg_len * sched.fec.n_outputs}")
        bits = viterbi_decode(soft, sched.fec, msg_len)
    else:
        if soft.size != msg_len:
            raise MalformedFrame(f"{soft.size} bits, expected {msg_len}")
        bits = (soft < 0).astype(np.uint8)
    if sched.repetition_pre_fec > 1:
        combined = combine_repetitions(hard_to_soft(bits), sched.repetition_pre_fec,
                                       CombineMethod.MAJORITY, sched.repetition_mode)
        bits = (combined < 0).astype(np.uint8)

    payload = crc_check(bits, crc)
    if payload is None:
        raise BlockError("CRC failure")
    if field_bits:
        tbs = int(payload[:field_bits] @ (1 << np.arange(field_bits - 1, -1, -1)))
        if tbs != sched.tbs:
            raise MalformedFrame(f"control field TBS {tbs} != scheduled {sched.tbs}")
        return payload[field_bits:]
    return payload


def receive_pdrch(rx: BasebandSignal, sched: D2rSchedule,
                  search_window: int | None = 256) -> np.ndarray:
    """Full receive chain: EGC, D-TAS lock, detection, decode."""
    dtas = build_dtas(sched.dtas_length, sched.dtas_device_index, sched.chip_duration_s)
    start = locate_dtas(rx, dtas, sched.chip_rate_cps, search_window)
    env = egc_combine(rx)
    det = detect_d2r(env, sched, start_sample=start)
    return decode_pdrch(det, sched)
