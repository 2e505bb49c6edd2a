"""Convolutional code tests: shift-register oracle, round trips, repetition."""

import numpy as np
import pytest

from aiotphy.errors import ConfigError, EmptyInput, LengthMismatch
from aiotphy.fec import (
    STANDARD_GENERATORS,
    ConvCode,
    RepeatMode,
    conv_encode,
    hard_to_soft,
    repeat,
    viterbi_decode,
)

ALL_CODES = sorted(STANDARD_GENERATORS)


def shift_register_encode(bits, generators, k):
    """Bit-by-bit register simulation; the independent encoder oracle."""
    bits = list(bits)
    reg = list(reversed(bits[-(k - 1):]))  # reg[i] = x_{t-1-i}, preloaded tail
    out = []
    for b in bits:
        window = [b] + reg
        for g in generators:
            acc = 0
            for i in range(k):
                if (g >> (k - 1 - i)) & 1:
                    acc ^= window[i]
            out.append(acc)
        reg = [b] + reg[:-1]
    return out


class TestEncode:
    @pytest.mark.parametrize("k,n", ALL_CODES)
    def test_all_zero_maps_to_zero(self, k, n):
        out = conv_encode(np.zeros(40, dtype=np.uint8), ConvCode(k, n))
        assert not out.any()

    def test_length_contract(self):
        out = conv_encode(np.ones(40, dtype=np.uint8), ConvCode(7, 3))
        assert out.size == 120

    def test_fixed_pattern_against_register_oracle(self):
        bits = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1]
        code = ConvCode(7, 3)
        expect = shift_register_encode(bits, code.generators, 7)
        assert conv_encode(bits, code).tolist() == expect

    @pytest.mark.parametrize("k,n", ALL_CODES)
    def test_register_oracle_random(self, k, n):
        rng = np.random.default_rng(k * 10 + n)
        code = ConvCode(k, n)
        for _ in range(100):
            bits = rng.integers(0, 2, int(rng.integers(k, 80))).astype(np.uint8)
            expect = shift_register_encode(bits.tolist(), code.generators, k)
            assert conv_encode(bits, code).tolist() == expect

    def test_tail_biting_shift_property(self):
        rng = np.random.default_rng(9)
        code = ConvCode(7, 3)
        bits = rng.integers(0, 2, 48).astype(np.uint8)
        base = conv_encode(bits, code).reshape(-1, 3)
        for t in (1, 7, 20):
            shifted = conv_encode(np.roll(bits, t), code).reshape(-1, 3)
            assert np.array_equal(shifted, np.roll(base, t, axis=0))

    def test_errors(self):
        with pytest.raises(EmptyInput):
            conv_encode([], ConvCode(7, 3))
        with pytest.raises(LengthMismatch):
            conv_encode([1, 0], ConvCode(7, 3))
        with pytest.raises(ConfigError):
            ConvCode(5, 3)
        with pytest.raises(ConfigError):
            ConvCode(7, 3, generators=(0o133, 0o171))


class TestViterbi:
    def test_round_trip_primary_code(self):
        rng = np.random.default_rng(21)
        code = ConvCode(7, 3)
        for _ in range(1000):
            bits = rng.integers(0, 2, int(rng.integers(8, 64))).astype(np.uint8)
            soft = hard_to_soft(conv_encode(bits, code))
            assert np.array_equal(viterbi_decode(soft, code, bits.size), bits)

    @pytest.mark.parametrize("k,n", ALL_CODES)
    def test_round_trip_all_codes(self, k, n):
        rng = np.random.default_rng(k * 100 + n)
        code = ConvCode(k, n)
        for _ in range(100):
            bits = rng.integers(0, 2, int(rng.integers(k, 48))).astype(np.uint8)
            soft = hard_to_soft(conv_encode(bits, code))
            assert np.array_equal(viterbi_decode(soft, code, bits.size), bits)

    def test_single_flip_corrected(self):
        rng = np.random.default_rng(33)
        code = ConvCode(7, 3)
        bits = rng.integers(0, 2, 12).astype(np.uint8)
        coded = conv_encode(bits, code)
        for i in range(coded.size):
            bad = coded.copy()
            bad[i] ^= 1
            got = viterbi_decode(hard_to_soft(bad), code, 12)
            assert np.array_equal(got, bits), f"flip at {i} not corrected"

    def test_erasure_input_no_crash(self):
        code = ConvCode(7, 3)
        out = viterbi_decode(np.zeros(36), code, 12)
        assert out.size == 12 and set(np.unique(out)) <= {0, 1}

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            viterbi_decode(np.zeros(35), ConvCode(7, 3), 12)


class TestCodingGain:
    def test_coded_beats_uncoded_in_awgn(self):
        # fixed per-transmitted-symbol SNR; block = 16 info bits
        rng = np.random.default_rng(4242)
        code = ConvCode(7, 3)
        snr_lin = 10 ** (3.0 / 10)
        sigma = np.sqrt(1.0 / (2 * snr_lin))
        blocks = 10_000
        uncoded_err = coded_err = 0
        for _ in range(blocks):
            bits = rng.integers(0, 2, 16).astype(np.uint8)
            tx_u = 1.0 - 2.0 * bits
            rx_u = tx_u + rng.normal(0, sigma, bits.size)
            if np.any((rx_u < 0) != (bits == 1)):
                uncoded_err += 1
            coded = conv_encode(bits, code)
            rx_c = (1.0 - 2.0 * coded) + rng.normal(0, sigma, coded.size)
            if not np.array_equal(viterbi_decode(rx_c, code, 16), bits):
                coded_err += 1
        p = uncoded_err / blocks
        three_sigma = 3 * np.sqrt(p * (1 - p) * blocks)
        assert coded_err < uncoded_err - three_sigma


class TestRepeat:
    def test_bit_level(self):
        assert repeat([1, 0], 2, RepeatMode.BIT).tolist() == [1, 1, 0, 0]

    def test_block_level(self):
        assert repeat([1, 0], 2, RepeatMode.BLOCK).tolist() == [1, 0, 1, 0]

    def test_identity(self):
        assert repeat([1, 0, 1], 1).tolist() == [1, 0, 1]

    def test_zero_factor(self):
        with pytest.raises(ConfigError):
            repeat([1], 0)
