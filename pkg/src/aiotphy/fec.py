"""Convolutional FEC for the device-to-reader link, plus bit/block repetition.

Tail-biting codes: the encoder register is preloaded with the last K-1
message bits, so the output is the cyclic convolution of the message
with each generator and no tail bits are sent.  Soft values use the
convention positive = more likely 0.

Generator table: the K=7 rate-1/3 code is the LTE tail-biting code
(133, 171, 165 octal).  Other constraint lengths use maximum-free-
distance generators from the published code tables; rate 1/4 at K=7 and
all rate-1/6 entries are derived from the rate-1/3 mother code by
generator repetition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, EmptyInput, LengthMismatch

STANDARD_GENERATORS: dict[tuple[int, int], tuple[int, ...]] = {
    (4, 2): (0o15, 0o17),
    (6, 2): (0o53, 0o75),
    (7, 2): (0o133, 0o171),
    (8, 2): (0o247, 0o371),
    (4, 3): (0o13, 0o15, 0o17),
    (6, 3): (0o47, 0o53, 0o75),
    (7, 3): (0o133, 0o171, 0o165),
    (8, 3): (0o225, 0o331, 0o367),
    (4, 4): (0o13, 0o15, 0o15, 0o17),
    (6, 4): (0o53, 0o67, 0o71, 0o75),
    (7, 4): (0o133, 0o171, 0o165, 0o133),
    (8, 4): (0o235, 0o275, 0o313, 0o357),
    (4, 6): (0o13, 0o15, 0o17, 0o13, 0o15, 0o17),
    (6, 6): (0o47, 0o53, 0o75, 0o47, 0o53, 0o75),
    (7, 6): (0o133, 0o171, 0o165, 0o133, 0o171, 0o165),
    (8, 6): (0o225, 0o331, 0o367, 0o225, 0o331, 0o367),
}

VITERBI_TRAINING_PASSES = 1  # wrap-around passes before the decision pass


@dataclass(frozen=True)
class ConvCode:
    """Rate-1/n tail-biting convolutional code."""

    constraint_length: int
    rate_denominator: int
    generators: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.constraint_length not in (4, 6, 7, 8):
            raise ConfigError(f"unsupported constraint length {self.constraint_length}")
        if self.rate_denominator not in (2, 3, 4, 6):
            raise ConfigError(f"unsupported rate 1/{self.rate_denominator}")
        if not self.generators:
            object.__setattr__(
                self, "generators",
                STANDARD_GENERATORS[(self.constraint_length, self.rate_denominator)],
            )
        if len(self.generators) != self.rate_denominator:
            raise ConfigError("generator count must equal 1/rate")
        if any(g >= 1 << self.constraint_length for g in self.generators):
            raise ConfigError("generator does not fit in K bits")

    @property
    def n_outputs(self) -> int:
        return self.rate_denominator


class RepeatMode(Enum):
    BIT = "bit"      # b0 b0 b1 b1 ...
    BLOCK = "block"  # b0 b1 ... b0 b1 ...


def repeat(bits, factor: int, mode: RepeatMode = RepeatMode.BIT) -> np.ndarray:
    if factor < 1:
        raise ConfigError("repetition factor must be >= 1")
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if mode is RepeatMode.BIT:
        return np.repeat(bits, factor)
    return np.tile(bits, factor)


def _generator_taps(gen: int, k: int) -> np.ndarray:
    """Tap mask, index 0 = current input bit."""
    return np.array([(gen >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.uint8)


def conv_encode(bits, code: ConvCode) -> np.ndarray:
    """Tail-biting encode; output length = len(bits) * n_outputs."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        raise EmptyInput("no bits to encode")
    k = code.constraint_length
    if bits.size < k - 1:
        raise LengthMismatch(f"tail-biting needs at least K-1={k - 1} bits")
    ext = np.concatenate([bits[-(k - 1):], bits])
    out = np.empty((bits.size, code.n_outputs), dtype=np.uint8)
    for j, gen in enumerate(code.generators):
        taps = _generator_taps(gen, k)
        acc = np.zeros(bits.size, dtype=np.uint8)
        for i in np.flatnonzero(taps):
            acc ^= ext[k - 1 - i: k - 1 - i + bits.size]
        out[:, j] = acc
    return out.ravel()


class _Trellis:
    """Per-code lookup tables for the vectorized Viterbi recursion."""

    _cache: dict[tuple[int, tuple[int, ...]], "_Trellis"] = {}

    def __init__(self, code: ConvCode):
        k = code.constraint_length
        n_states = 1 << (k - 1)
        # predecessor word w = (input_bit << (K-1)) | prev_state; the two
        # words feeding state s' are 2*s' and 2*s'+1
        words = np.arange(2 * n_states, dtype=np.int64)
        self.word_prev_state = words & (n_states - 1)
        self.word_input_bit = words >> (k - 1)
        self.pred_words = np.stack(
            [np.arange(n_states) * 2, np.arange(n_states) * 2 + 1], axis=1
        )
        outs = np.empty((2 * n_states, code.n_outputs), dtype=np.int8)
        for j, gen in enumerate(code.generators):
            taps = _generator_taps(gen, k)
            bits_of_w = (words[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1
            outs[:, j] = (bits_of_w * taps[None, :]).sum(axis=1) % 2
        self.out_sign = (1 - 2 * outs).astype(np.float64)  # +1 for coded 0

    @classmethod
    def get(cls, code: ConvCode) -> "_Trellis":
        key = (code.constraint_length, code.generators)
        if key not in cls._cache:
            cls._cache[key] = cls(code)
        return cls._cache[key]


def viterbi_decode(soft, code: ConvCode, msg_len: int) -> np.ndarray:
    """Wrap-around Viterbi decode of a tail-biting codeword.

    `soft` holds one metric per coded bit (positive = 0 more likely);
    hard decisions can be passed as +/-1.  Returns msg_len bits.
    """
    soft = np.asarray(soft, dtype=np.float64).ravel()
    if soft.size != msg_len * code.n_outputs:
        raise LengthMismatch(
            f"expected {msg_len * code.n_outputs} soft values, got {soft.size}"
        )
    if not np.all(np.isfinite(soft)):
        raise ValueError("soft metrics must be finite")
    tr = _Trellis.get(code)
    llr = soft.reshape(msg_len, code.n_outputs)
    # branch metric for every trellis word at every step: (msg_len, 2S)
    bm = 0.5 * (llr @ tr.out_sign.T)

    n_states = tr.pred_words.shape[0]
    metric = np.zeros(n_states)
    for _ in range(VITERBI_TRAINING_PASSES):
        for step in range(msg_len):
            cand = metric[tr.word_prev_state] + bm[step]
            pair = cand[tr.pred_words]
            metric = pair.max(axis=1)

    choice = np.empty((msg_len, n_states), dtype=np.int64)
    for step in range(msg_len):
        cand = metric[tr.word_prev_state] + bm[step]
        pair = cand[tr.pred_words]
        pick = pair.argmax(axis=1)
        choice[step] = tr.pred_words[np.arange(n_states), pick]
        metric = pair[np.arange(n_states), pick]

    state = int(metric.argmax())
    out = np.empty(msg_len, dtype=np.uint8)
    for step in range(msg_len - 1, -1, -1):
        w = choice[step, state]
        out[step] = tr.word_input_bit[w]
        state = int(tr.word_prev_state[w])
    return out


def hard_to_soft(bits) -> np.ndarray:
    """Map hard 0/1 decisions to +/-1 soft metrics."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64).ravel()
