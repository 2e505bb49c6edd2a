"""Impairment models: TDL-A multipath fading, AWGN, sampling-frequency offset.

Fading taps follow the 23-tap TDL-A normalized power-delay profile
(TR 38.901 Table 7.7.2-1) scaled by the configured delay spread and
normalized to unit average total power.  Each tap evolves as a Jakes
sum-of-sinusoids process with classical Doppler spectrum; gains are
generated on a coarse time grid (the Doppler rate is a few Hz) and
interpolated to the signal sample rate when the channel is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import LengthMismatch
from .signal import BasebandSignal

SPEED_OF_LIGHT = 299_792_458.0

# (normalized delay, power dB)
TDLA_PROFILE = np.array([
    (0.0000, -13.4), (0.3819, 0.0), (0.4025, -2.2), (0.5868, -4.0),
    (0.4610, -6.0), (0.5375, -8.2), (0.6708, -9.9), (0.5750, -10.5),
    (0.7618, -7.5), (1.5375, -15.9), (1.8978, -6.6), (2.2242, -16.7),
    (2.1718, -12.4), (2.4942, -15.2), (2.5119, -10.8), (3.0582, -11.3),
    (4.0810, -12.7), (4.4579, -16.2), (4.5695, -18.3), (4.7966, -18.9),
    (5.0066, -16.6), (5.3043, -19.9), (9.6586, -29.7),
])

JAKES_SINUSOIDS = 128
COARSE_OVERSAMPLING = 50   # coarse-grid rate as a multiple of the Doppler rate
GAIN_BLOCK_SAMPLES = 64    # gain held constant over this many signal samples


class ChannelProfile(Enum):
    TDL_A = "tdl-a"
    AWGN_ONLY = "awgn-only"


@dataclass
class ChannelConfig:
    profile: ChannelProfile = ChannelProfile.TDL_A
    delay_spread_s: float = 30e-9
    velocity_mps: float = 3.0 / 3.6
    carrier_hz: float = 0.9e9
    n_tx: int = 1
    n_rx: int = 1
    seed: int = 0
    n_sinusoids: int = JAKES_SINUSOIDS

    def __post_init__(self):
        if self.delay_spread_s <= 0:
            raise ValueError("delay_spread_s must be positive")
        if self.velocity_mps < 0:
            raise ValueError("velocity must be non-negative")

    @property
    def doppler_hz(self) -> float:
        return self.velocity_mps * self.carrier_hz / SPEED_OF_LIGHT


def jakes_process(rng: np.random.Generator, doppler_hz: float, t: np.ndarray,
                  n_sinusoids: int = JAKES_SINUSOIDS) -> np.ndarray:
    """Unit-power Rayleigh fading gain series via sum of sinusoids."""
    theta = rng.uniform(0, 2 * np.pi)
    alpha = 2 * np.pi * np.arange(n_sinusoids) / n_sinusoids + theta
    phi = rng.uniform(0, 2 * np.pi, n_sinusoids)
    phase = 2 * np.pi * doppler_hz * np.cos(alpha)[:, None] * t[None, :] + phi[:, None]
    return np.exp(1j * phase).sum(axis=0) / np.sqrt(n_sinusoids)


@dataclass
class ChannelRealization:
    """Time-varying tap gains for every (tx, rx) pair.

    Gains are stored on the coarse grid `t_grid`; `tap_gains` interpolates
    to the signal rate on demand.
    """

    tap_delays_s: np.ndarray
    sample_rate_hz: float
    duration_s: float
    n_tx: int
    n_rx: int
    t_grid: np.ndarray
    coarse_gains: np.ndarray = field(repr=False)  # (n_tx, n_rx, n_taps, n_grid)

    def tap_gains(self, tx: int, rx: int, n_samples: int | None = None) -> np.ndarray:
        """Per-tap gain series at the signal sample rate, shape (n_taps, n)."""
        if n_samples is None:
            n_samples = int(round(self.duration_s * self.sample_rate_hz))
        t = np.arange(n_samples) / self.sample_rate_hz
        g = self.coarse_gains[tx, rx]
        if self.t_grid.size == 1:
            return np.broadcast_to(g[:, :1], (g.shape[0], n_samples)).copy()
        out = np.empty((g.shape[0], n_samples), dtype=np.complex128)
        for i in range(g.shape[0]):
            out[i] = np.interp(t, self.t_grid, g[i].real) + 1j * np.interp(
                t, self.t_grid, g[i].imag)
        return out


def make_channel(cfg: ChannelConfig, duration_s: float,
                 sample_rate_hz: float) -> ChannelRealization:
    """Draw one fading realization covering `duration_s`."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(cfg.seed)

    if cfg.profile is ChannelProfile.AWGN_ONLY:
        return ChannelRealization(
            tap_delays_s=np.zeros(1), sample_rate_hz=sample_rate_hz,
            duration_s=duration_s, n_tx=cfg.n_tx, n_rx=cfg.n_rx,
            t_grid=np.zeros(1),
            coarse_gains=np.ones((cfg.n_tx, cfg.n_rx, 1, 1), dtype=np.complex128),
        )

    delays = TDLA_PROFILE[:, 0] * cfg.delay_spread_s
    powers = 10 ** (TDLA_PROFILE[:, 1] / 10)
    powers = powers / powers.sum()
    f_d = cfg.doppler_hz

    if f_d > 0:
        step = 1.0 / (COARSE_OVERSAMPLING * f_d)
        n_grid = max(2, int(np.ceil(duration_s / step)) + 2)
        t_grid = np.linspace(0, duration_s, n_grid)
    else:
        t_grid = np.zeros(1)

    n_taps = delays.size
    n_proc = cfg.n_tx * cfg.n_rx * n_taps
    theta = rng.uniform(0, 2 * np.pi, n_proc)
    phi = rng.uniform(0, 2 * np.pi, (n_proc, cfg.n_sinusoids))
    alpha = 2 * np.pi * np.arange(cfg.n_sinusoids) / cfg.n_sinusoids
    freqs = 2 * np.pi * f_d * np.cos(alpha[None, :] + theta[:, None])
    phase = freqs[:, :, None] * t_grid[None, None, :] + phi[:, :, None]
    gains = np.exp(1j * phase).sum(axis=1) / np.sqrt(cfg.n_sinusoids)
    gains = gains.reshape(cfg.n_tx, cfg.n_rx, n_taps, t_grid.size)
    gains *= np.sqrt(powers)[None, None, :, None]

    return ChannelRealization(
        tap_delays_s=delays, sample_rate_hz=sample_rate_hz,
        duration_s=duration_s, n_tx=cfg.n_tx, n_rx=cfg.n_rx,
        t_grid=t_grid, coarse_gains=gains,
    )


def apply_channel(signal: BasebandSignal, chan: ChannelRealization) -> BasebandSignal:
    """Convolve the signal with the realization's delayed taps.

    A single-stream input is broadcast to all transmit antennas with a
    1/sqrt(n_tx) power split; tap delays are rounded to the nearest
    sample at the signal rate and merged per integer delay.
    """
    x = signal.samples
    if x.shape[0] == 1 and chan.n_tx > 1:
        x = np.broadcast_to(x, (chan.n_tx, x.shape[1]))
    elif x.shape[0] != chan.n_tx:
        raise LengthMismatch(f"signal has {x.shape[0]} streams, channel expects {chan.n_tx}")
    n = x.shape[1]
    if n / signal.sample_rate_hz > chan.duration_s + 1e-12:
        raise LengthMismatch("channel realization shorter than signal")

    scale = 1.0 / np.sqrt(chan.n_tx)
    delay_samples = np.rint(chan.tap_delays_s * signal.sample_rate_hz).astype(int)
    out = np.zeros((chan.n_rx, n), dtype=np.complex128)
    static = chan.t_grid.size == 1
    if not static:
        # gains vary on the multi-millisecond Doppler scale, so evaluate
        # them block-wise and hold within each block
        n_blocks = -(-n // GAIN_BLOCK_SAMPLES)
        t_blocks = (np.arange(n_blocks) + 0.5) * GAIN_BLOCK_SAMPLES / signal.sample_rate_hz

    for rx in range(chan.n_rx):
        for tx in range(chan.n_tx):
            coarse = chan.coarse_gains[tx, rx]
            for d in np.unique(delay_samples):
                idx = np.flatnonzero(delay_samples == d)
                g_coarse = coarse[idx].sum(axis=0) * scale
                if static:
                    g = g_coarse[0]
                else:
                    gb = np.interp(t_blocks, chan.t_grid, g_coarse.real) + 1j * np.interp(
                        t_blocks, chan.t_grid, g_coarse.imag)
                    g = np.repeat(gb, GAIN_BLOCK_SAMPLES)[:n]
                if d == 0:
                    out[rx] += g * x[tx]
                elif static:
                    out[rx, d:] += g * x[tx, : n - d]
                else:
                    out[rx, d:] += g[d:] * x[tx, : n - d]
    return BasebandSignal(out, signal.sample_rate_hz)


def add_awgn(signal: BasebandSignal, snr_db: float, signal_power_ref: float,
             seed: int | np.random.Generator = 0) -> BasebandSignal:
    """Add circular complex Gaussian noise at variance ref / 10^(snr/10)."""
    if np.isinf(snr_db) and snr_db > 0:
        return BasebandSignal(signal.samples.copy(), signal.sample_rate_hz)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    var = signal_power_ref / 10 ** (snr_db / 10)
    sigma = np.sqrt(var / 2)
    shape = signal.samples.shape
    noise = (sigma * rng.standard_normal((shape[0], 2 * shape[1]))).view(np.complex128)
    return BasebandSignal(signal.samples + noise, signal.sample_rate_hz)


def apply_sfo(signal: BasebandSignal, ppm: float) -> BasebandSignal:
    """Resample by (1 + ppm*1e-6), modeling the device clock error.

    A fast device clock reads the same waveform in fewer samples, so the
    output is shorter for positive ppm.
    """
    if abs(ppm) > 2e5:
        raise ValueError("|ppm| above the supported 2e5 range")
    if ppm == 0:
        return BasebandSignal(signal.samples.copy(), signal.sample_rate_hz)
    factor = 1 + ppm * 1e-6
    n = signal.samples.shape[1]
    t_out = np.arange(0, n - 1 + 1e-9, factor)
    t_in = np.arange(n)
    out = np.empty((signal.samples.shape[0], t_out.size), dtype=np.complex128)
    for a in range(signal.samples.shape[0]):
        out[a] = np.interp(t_out, t_in, signal.samples[a].real) + 1j * np.interp(
            t_out, t_in, signal.samples[a].imag)
    return BasebandSignal(out, signal.sample_rate_hz)
