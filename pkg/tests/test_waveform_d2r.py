"""PDRCH transmitter tests: D-TAS, small shift, modulation, assembly."""

import numpy as np
import pytest
from scipy.signal import welch

from aiotphy.d2r_tx import (
    D2R_POSTAMBLE,
    MIDAMBLE,
    D2rModulation,
    D2rSchedule,
    ShiftOption,
    apply_small_shift,
    assemble_pdrch,
    baseband_modulate,
    build_dtas,
    d2r_frame_layout,
    pdrch_chips,
)
from aiotphy.errors import ConfigError, LengthMismatch, PayloadTooLong
from aiotphy.fec import ConvCode
from aiotphy.linecode import ChipSeq, LineScheme, line_encode

FS = 1.92e6


def bipolar(chips):
    return 2.0 * np.asarray(chips, dtype=np.float64) - 1.0


class TestDtas:
    def test_m_sequence_autocorrelation(self):
        s = bipolar(build_dtas(31, 0).chips)
        ac = np.array([np.dot(s, np.roll(s, k)) for k in range(31)])
        assert ac[0] == 31
        assert np.all(ac[1:] == -1)

    def test_gold_cross_correlation_bound(self):
        pairs = [(0, 2), (1, 5), (3, 17), (0, 1)]
        for i, j in pairs:
            a = bipolar(build_dtas(31, i).chips)
            b = bipolar(build_dtas(31, j).chips)
            worst = max(abs(np.dot(a, np.roll(b, k))) for k in range(31))
            assert worst / 31 <= 9 / 31 + 1e-12

    def test_default_sequence_sidelobe_ratio(self):
        s = bipolar(build_dtas(31, 0).chips)
        peak = np.dot(s, s)
        side = max(abs(np.dot(s, np.roll(s, k))) for k in range(1, 31))
        assert peak / side >= 4

    def test_deterministic(self):
        a = build_dtas(31, 7).chips
        b = build_dtas(31, 7).chips
        assert np.array_equal(a, b)

    def test_length_too_short(self):
        with pytest.raises(LengthMismatch):
            build_dtas(15, 0)

    def test_length_63_family(self):
        s = bipolar(build_dtas(63, 0).chips)
        ac = np.array([np.dot(s, np.roll(s, k)) for k in range(63)])
        assert ac[0] == 63 and np.all(ac[1:] == -1)


class TestSmallShift:
    def test_r1_option1_identity(self):
        sched = D2rSchedule(tbs=4, shift_R=1)
        chips = line_encode([1, 0, 1, 1], LineScheme.MANCHESTER)
        out = apply_small_shift(chips, sched)
        assert np.array_equal(out.chips, chips.chips)

    def test_bit0_r2_option1(self):
        sched = D2rSchedule(tbs=1, shift_R=2)
        out = apply_small_shift(ChipSeq([1, 0]), sched)
        assert out.chips.tolist() == [1, 0, 1, 0]

    def test_chip_budget(self):
        for opt in ShiftOption:
            for r in (2, 4):
                sched = D2rSchedule(tbs=8, shift_R=r, shift_option=opt)
                chips = line_encode(np.ones(8, dtype=np.uint8), LineScheme.MANCHESTER)
                out = apply_small_shift(chips, sched)
                assert out.chips.size == 8 * 2 * r

    def test_option1_tone_for_constant_bits(self):
        # unmodulated input: the codeword repetition is a pure chip-rate
        # alternation, a line exactly at 1/(2*chip) = R/Tb
        sched = D2rSchedule(tbs=64, shift_R=4)
        chips = line_encode(np.zeros(64, dtype=np.uint8), LineScheme.MANCHESTER)
        x = bipolar(apply_small_shift(chips, sched).chips)
        spec = np.abs(np.fft.rfft(x)) ** 2
        freqs = np.fft.rfftfreq(x.size, d=sched.chip_duration_s)
        f0 = sched.chip_rate_cps / 2
        assert abs(freqs[np.argmax(spec)] - f0) <= freqs[1] + 1e-9

    @pytest.mark.parametrize("opt", list(ShiftOption))
    def test_random_stream_peak_near_shift(self, opt):
        rng = np.random.default_rng(42)
        bits = rng.integers(0, 2, 512).astype(np.uint8)
        r = 4
        sched = D2rSchedule(tbs=512, shift_R=r, shift_option=opt)
        chips = line_encode(bits, LineScheme.MANCHESTER, sched.chip_duration_s)
        x = bipolar(apply_small_shift(chips, sched).chips)
        freqs, psd = welch(x, fs=sched.chip_rate_cps, nperseg=512)
        f0 = sched.chip_rate_cps / 2
        bit_rate = sched.chip_rate_cps / (2 * r)
        assert abs(freqs[np.argmax(psd)] - f0) <= bit_rate

    def test_invalid_r(self):
        sched = D2rSchedule(tbs=4)
        with pytest.raises(ConfigError):
            apply_small_shift(ChipSeq([1, 0]), sched)


class TestModulation:
    def test_ook(self):
        sig = baseband_modulate(ChipSeq([1, 1, 1]), D2rModulation.OOK, FS)
        assert np.allclose(sig.samples, 1.0)
        assert sig.n_samples == 3 * 256

    def test_bpsk(self):
        sig = baseband_modulate(ChipSeq([1, 0]), D2rModulation.BPSK, FS)
        assert np.allclose(sig.samples[0, :256], 1.0)
        assert np.allclose(sig.samples[0, 256:], -1.0)

    def test_msk_phase_trajectory(self):
        rng = np.random.default_rng(3)
        chips = rng.integers(0, 2, 64).astype(np.uint8)
        sig = baseband_modulate(ChipSeq(chips), D2rModulation.MSK, FS)
        s = sig.samples[0]
        assert np.allclose(np.abs(s), 1.0)
        phase = np.unwrap(np.angle(s))
        per_chip = np.diff(phase.reshape(-1, 256)[:, 0])
        expect = np.where(chips == 1, np.pi / 2, -np.pi / 2)[:-1]
        # phase advances +/- pi/2 per chip (first-sample-to-first-sample)
        assert np.allclose(per_chip, expect, atol=1e-9)

    def test_msk_phase_continuity(self):
        rng = np.random.default_rng(4)
        chips = rng.integers(0, 2, 128).astype(np.uint8)
        sig = baseband_modulate(ChipSeq(chips), D2rModulation.MSK, FS)
        jumps = np.abs(np.diff(np.unwrap(np.angle(sig.samples[0]))))
        assert jumps.max() <= np.pi / 2 + 1e-9

    def test_unsupported_rate(self):
        with pytest.raises(ConfigError):
            baseband_modulate(ChipSeq([1]), D2rModulation.OOK, 10_000.0)


class TestAssembly:
    def test_midamble_positions(self):
        sched = D2rSchedule(tbs=96, midamble_period_bits=16)
        layout = d2r_frame_layout(sched)
        assert len(layout.midamble_chip_positions) == 6
        tb = np.random.default_rng(0).integers(0, 2, 96).astype(np.uint8)
        chips = pdrch_chips(tb, sched)
        for p in layout.midamble_chip_positions:
            assert np.array_equal(chips[p: p + MIDAMBLE.size], MIDAMBLE)
        # insertion lands on codeword boundaries: strip midambles and the
        # remaining stream is the plain line-coded frame
        keep = np.ones(chips.size, dtype=bool)
        for p in layout.midamble_chip_positions:
            keep[p: p + MIDAMBLE.size] = False
        plain = pdrch_chips(tb, D2rSchedule(tbs=96))
        assert np.array_equal(chips[keep], plain)

    def test_pipeline_length_closed_form(self):
        cases = [
            D2rSchedule(tbs=20),
            D2rSchedule(tbs=96, fec=ConvCode(7, 3), repetition_pre_fec=2,
                        repetition_post_fec=3, midamble_period_bits=32),
            D2rSchedule(tbs=40, shift_R=4),
        ]
        for sched in cases:
            layout = d2r_frame_layout(sched)
            tb = np.zeros(sched.tbs, dtype=np.uint8)
            sig = assemble_pdrch(tb, sched)
            assert sig.n_samples == layout.total_chips * 256
            n_mid = len(layout.midamble_chip_positions)
            expect_chips = (sched.dtas_length
                            + layout.n_coded_bits * sched.chips_per_bit
                            + n_mid * MIDAMBLE.size + layout.n_postamble_chips)
            assert layout.total_chips == expect_chips

    def test_oversized_tbs(self):
        with pytest.raises(PayloadTooLong):
            D2rSchedule(tbs=1001)

    def test_tb_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pdrch_chips(np.zeros(10, dtype=np.uint8), D2rSchedule(tbs=20))

    def test_postamble_present(self):
        sched = D2rSchedule(tbs=20)
        tb = np.zeros(20, dtype=np.uint8)
        chips = pdrch_chips(tb, sched)
        assert np.array_equal(chips[-4:], D2R_POSTAMBLE)
