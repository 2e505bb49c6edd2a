"""PRDCH transmitter tests: waveform shape, spectra, frame accounting."""

import numpy as np
import pytest

from aiotphy.errors import ConfigError, EmptyInput, LengthMismatch, PayloadTooLong
from aiotphy.r2d_tx import (
    CLOCK_ACQUISITION,
    POSTAMBLE,
    START_INDICATOR,
    SUBCARRIER_OFFSET,
    FrameEnding,
    R2dConfig,
    assemble_prdch,
    build_rtas,
    chip_level_profile,
    frame_layout,
    ook_modulate,
    prdch_chips,
    r2d_data_rate,
)


def strip_cp(samples, cfg, decimation):
    """Split a frame into CP-free symbol bodies."""
    fft = cfg.fft_size // decimation
    bodies, pos, i = [], 0, 0
    while pos < samples.size:
        cp = int(cfg.cp_lengths(1, decimation, start_symbol=i)[0])
        bodies.append(samples[pos + cp: pos + cp + fft])
        pos += cp + fft
        i += 1
    return np.array(bodies)


def envelope_oracle(samples, smooth):
    """Squaring + moving-average low-pass, the detection reference."""
    power = np.abs(samples) ** 2
    kernel = np.ones(smooth) / smooth
    return np.convolve(power, kernel, mode="same")


class TestConfig:
    def test_chip_duration_law(self):
        for m in (1, 2, 4):
            cfg = R2dConfig(m_chips_per_symbol=m)
            assert cfg.chip_duration_s == pytest.approx(1.0 / (m * 15e3))

    def test_invalid_m(self):
        with pytest.raises(ConfigError):
            R2dConfig(m_chips_per_symbol=3)

    def test_rate_grid_consistency(self):
        with pytest.raises(ConfigError):
            R2dConfig(fft_size=2048)


class TestRtas:
    def test_clock_acquisition_edges(self):
        rtas = build_rtas(R2dConfig())
        chips = rtas.clock_acquisition.chips
        falling = np.count_nonzero((chips[:-1] == 1) & (chips[1:] == 0))
        assert falling >= 2

    def test_chip_duration_m1(self):
        rtas = build_rtas(R2dConfig(m_chips_per_symbol=1))
        assert rtas.clock_acquisition.chip_duration_s == pytest.approx(1 / 15e3)

    def test_patterns_distinct_from_idle(self):
        rtas = build_rtas(R2dConfig())
        assert rtas.start_indicator.chips.any()
        assert not np.array_equal(rtas.start_indicator.chips, rtas.clock_acquisition.chips)


class TestOokModulate:
    def test_all_on_envelope_constant(self):
        sig = ook_modulate(np.ones(2, dtype=np.uint8), R2dConfig(), decimation=32)
        body = strip_cp(sig.samples[0], R2dConfig(), 32)
        env = np.abs(body)
        assert env.min() > 0.99 and env.max() < 1.01

    def test_all_off_is_silence(self):
        sig = ook_modulate(np.zeros(4, dtype=np.uint8), R2dConfig(m_chips_per_symbol=4))
        assert np.max(np.abs(sig.samples)) == 0

    def test_m4_quarter_envelope(self):
        cfg = R2dConfig(m_chips_per_symbol=4)
        sig = ook_modulate(np.array([1, 0, 1, 0], dtype=np.uint8), cfg, decimation=32)
        body = strip_cp(sig.samples[0], cfg, 32)[0]
        env = envelope_oracle(body, smooth=8)
        quarters = env.reshape(4, -1).mean(axis=1)
        assert quarters[0] > 3 * quarters[1]
        assert quarters[2] > 3 * quarters[3]

    def test_chip_count_divisibility(self):
        with pytest.raises(LengthMismatch):
            ook_modulate(np.ones(3, dtype=np.uint8), R2dConfig(m_chips_per_symbol=4))

    def test_spectral_confinement(self):
        cfg = R2dConfig(m_chips_per_symbol=4)
        rng = np.random.default_rng(0)
        chips = rng.integers(0, 2, 16).astype(np.uint8)
        sig = ook_modulate(chips, cfg, decimation=32)
        for body in strip_cp(sig.samples[0], cfg, 32):
            spec = np.abs(np.fft.fft(body))
            occupied = spec[SUBCARRIER_OFFSET:SUBCARRIER_OFFSET + 12]
            rest = np.concatenate([spec[:SUBCARRIER_OFFSET], spec[SUBCARRIER_OFFSET + 12:]])
            if occupied.max() > 0:
                assert rest.max() < 1e-10 * occupied.max()

    def test_decimated_equals_full_rate(self):
        cfg = R2dConfig(m_chips_per_symbol=2)
        tb = np.random.default_rng(1).integers(0, 2, 20).astype(np.uint8)
        full = assemble_prdch(tb, cfg, decimation=1)
        fast = assemble_prdch(tb, cfg, decimation=32)
        assert full.sample_rate_hz == pytest.approx(61.44e6)
        assert fast.sample_rate_hz == pytest.approx(1.92e6)
        assert np.max(np.abs(full.samples[0, ::32] - fast.samples[0])) < 1e-12


class TestEnvelopeFidelity:
    @pytest.mark.parametrize("m", [1, 2, 4])
    def test_chips_recovered_from_envelope(self, m):
        cfg = R2dConfig(m_chips_per_symbol=m)
        rng = np.random.default_rng(m)
        tb = rng.integers(0, 2, 20).astype(np.uint8)
        layout = frame_layout(cfg, 20)
        sig = assemble_prdch(tb, cfg, decimation=32)
        bodies = strip_cp(sig.samples[0], cfg, 32)
        env = np.abs(np.concatenate(bodies)) ** 2
        spc = cfg.samples_per_chip(32)
        got = (env.reshape(-1, spc).mean(axis=1) > 0.5).astype(np.uint8)
        rtas_chips = np.concatenate([START_INDICATOR, CLOCK_ACQUISITION])
        expect = np.concatenate([rtas_chips, prdch_chips(tb, cfg), POSTAMBLE])
        assert np.array_equal(got[:expect.size], expect)
        assert got.size == layout.total_chips

    def test_profile_matches_envelope(self):
        cfg = R2dConfig(m_chips_per_symbol=4)
        chips = np.array([1, 0, 0, 1, 1, 1, 0, 0], dtype=np.uint8)
        sig = ook_modulate(chips, cfg, decimation=32)
        profile = chip_level_profile(chips, cfg, decimation=32)
        assert profile.size == sig.n_samples
        env = np.abs(sig.samples[0]) ** 2
        corr = np.corrcoef(env, profile)[0, 1]
        assert corr > 0.8  # M=4 carries Gibbs ripple at chip edges


class TestFrameLayout:
    def test_tbs20_m4_symbol_count(self):
        layout = frame_layout(R2dConfig(m_chips_per_symbol=4), 20)
        assert layout.crc_bits == 6
        assert layout.n_payload_chips == 52          # 26 bits Manchester coded
        assert layout.n_payload_chips // 4 == 13     # 13 payload OFDM symbols
        assert layout.total_symbols == 18            # plus R-TAS/postamble/padding

    def test_layout_matches_waveform(self):
        for m in (1, 2, 4):
            for tbs in (20, 96):
                cfg = R2dConfig(m_chips_per_symbol=m)
                layout = frame_layout(cfg, tbs)
                tb = np.zeros(tbs, dtype=np.uint8)
                sig = assemble_prdch(tb, cfg, decimation=32)
                cps = cfg.cp_lengths(layout.total_symbols, 32)
                assert sig.n_samples == layout.total_symbols * 128 + cps.sum()

    def test_tbs_in_control_adds_field(self):
        cfg = R2dConfig(ending=FrameEnding.TBS_IN_CONTROL)
        layout = frame_layout(cfg, 20)
        assert layout.n_postamble_chips == 0
        # control field + TB = 30 bits, which still selects the 6-bit CRC
        assert layout.n_payload_chips == 2 * (10 + 20 + 6)

    def test_empty_tb(self):
        with pytest.raises(EmptyInput):
            assemble_prdch(np.array([], dtype=np.uint8), R2dConfig())

    def test_oversized_tb(self):
        with pytest.raises(PayloadTooLong):
            assemble_prdch(np.zeros(1001, dtype=np.uint8), R2dConfig())


class TestDataRate:
    def test_unit_ratio(self):
        assert r2d_data_rate(20, 6, 20) == pytest.approx(1.0)

    def test_cross_checked_against_symbol_count(self):
        cfg = R2dConfig(m_chips_per_symbol=4)
        layout = frame_layout(cfg, 96)
        rate = r2d_data_rate(96, layout.crc_bits, layout.total_symbols)
        assert rate == pytest.approx(96 / layout.total_symbols)

    def test_monotone_in_m(self):
        rates = []
        for m in (1, 2, 4):
            layout = frame_layout(R2dConfig(m_chips_per_symbol=m), 96)
            rates.append(r2d_data_rate(96, layout.crc_bits, layout.total_symbols))
        assert rates[0] < rates[1] < rates[2]

    def test_zero_symbols(self):
        with pytest.raises(ConfigError):
            r2d_data_rate(20, 6, 0)
