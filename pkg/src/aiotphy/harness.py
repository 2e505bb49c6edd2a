"""Monte-Carlo BLER engine with deterministic seeding and CSV/JSON export.

Each (SNR point, trial) pair derives its randomness solely from
(master_seed, snr_index, trial_index), so results are byte-identical
across runs and across worker counts.  Trials are processed in fixed-size
batches; the stop rule (enough blocks, or enough block errors) is
evaluated at batch boundaries in trial order, which keeps early stopping
deterministic under parallel execution.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
import yaml

from .channel import ChannelConfig, ChannelProfile, add_awgn, apply_channel, apply_sfo, make_channel
from .d2r_rx import receive_pdrch
from .d2r_tx import D2rModulation, D2rSchedule, assemble_pdrch
from .errors import AiotPhyError, ConfigError
from .linecode import LineScheme
from .r2d_rx import Combining, DetectorConfig, Thresholding, receive_prdch
from .r2d_tx import R2dConfig, assemble_prdch

WORKERS_ENV_VAR = "AIOTPHY_WORKERS"
TRIAL_BATCH = 50
R2D_DECIMATION = 32  # generate at 1.92 Msps, sample-exact vs 61.44 Msps
RX_GUARD_SAMPLES = 512  # noise-only tail after the frame; sync jitter margin


class Link(Enum):
    R2D = "r2d"
    D2R = "d2r"


@dataclass
class SimConfig:
    link: Link = Link.R2D
    tbs: int = 20
    snr_db_points: tuple[float, ...] = tuple(np.arange(-10.0, 30.1, 2.0))
    min_blocks: int = 2000
    max_block_errors: int = 100
    master_seed: int = 0
    sfo_ppm: float = 0.0

    # reader-to-device leg
    m_chips_per_symbol: int = 1
    thresholding: Thresholding = Thresholding.ADAPTIVE
    combining: Combining = Combining.MEAN_PER_CHIP
    r2d_n_tx: int = 2

    # device-to-reader leg
    d2r_n_rx: int = 1
    d2r_chip_rate_cps: float = 7500.0
    d2r_line: LineScheme = LineScheme.MANCHESTER
    d2r_modulation: D2rModulation = D2rModulation.OOK

    # impairments
    channel_profile: ChannelProfile = ChannelProfile.TDL_A
    delay_spread_ns: float = 30.0
    device_velocity_kmph: float = 3.0
    carrier_hz: float = 0.9e9

    def __post_init__(self):
        if self.min_blocks < 100:
            raise ConfigError("min_blocks must be >= 100")
        snrs = tuple(float(s) for s in self.snr_db_points)
        if len(snrs) == 0 or any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ConfigError("snr_db_points must be strictly increasing")
        self.snr_db_points = snrs
        if not 1 <= self.tbs <= 1000:
            raise ConfigError("tbs must be within [1, 1000]")

    def r2d_config(self) -> R2dConfig:
        return R2dConfig(m_chips_per_symbol=self.m_chips_per_symbol)

    def detector(self) -> DetectorConfig:
        return DetectorConfig(
            thresholding=self.thresholding, combining=self.combining,
            sfo_search_ppm=1.2 * abs(self.sfo_ppm) if self.sfo_ppm else 0.0)

    def d2r_schedule(self) -> D2rSchedule:
        return D2rSchedule(tbs=self.tbs, chip_rate_cps=self.d2r_chip_rate_cps,
                           line=self.d2r_line, modulation=self.d2r_modulation)

    def channel_config(self, n_tx: int, n_rx: int, seed: int) -> ChannelConfig:
        return ChannelConfig(
            profile=self.channel_profile, delay_spread_s=self.delay_spread_ns * 1e-9,
            velocity_mps=self.device_velocity_kmph / 3.6, carrier_hz=self.carrier_hz,
            n_tx=n_tx, n_rx=n_rx, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, Enum):
                out[k] = v.value
        return out

    def config_hash(self) -> str:
        return hash_config(self.to_dict())


def hash_config(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class BlerPoint:
    snr_db: float
    blocks: int
    block_errors: int
    bler: float = field(init=False)
    ci95_halfwidth: float = field(init=False)

    def __post_init__(self):
        self.bler = self.block_errors / self.blocks if self.blocks else 0.0
        p = self.bler
        self.ci95_halfwidth = 1.96 * np.sqrt(p * (1 - p) / self.blocks) if self.blocks else 0.0


def _trial_error(cfg: SimConfig, snr_db: float, snr_index: int, trial: int) -> bool:
    """One TX -> channel -> RX trial; True means block error."""
    ss = np.random.SeedSequence([cfg.master_seed, snr_index, trial])
    s_tb, s_ch, s_noise = ss.spawn(3)
    rng = np.random.default_rng(s_tb)
    tb = rng.integers(0, 2, cfg.tbs).astype(np.uint8)
    chan_seed = int(s_ch.generate_state(1)[0])

    try:
        if cfg.link is Link.R2D:
            r2d = cfg.r2d_config()
            sig = assemble_prdch(tb, r2d, decimation=R2D_DECIMATION)
            chan = make_channel(cfg.channel_config(cfg.r2d_n_tx, 1, chan_seed),
                                sig.duration_s, sig.sample_rate_hz)
            faded = _with_guard(apply_channel(sig, chan))
            bw = r2d.n_subcarriers * r2d.scs_hz
            ref = _inband_power_ref(sig, bw)
            noisy = add_awgn(faded, snr_db, ref, seed=np.random.default_rng(s_noise))
            if cfg.sfo_ppm:
                noisy = apply_sfo(noisy, cfg.sfo_ppm)
            got = receive_prdch(noisy, r2d, cfg.detector(), cfg.tbs)
        else:
            sched = cfg.d2r_schedule()
            sig = assemble_pdrch(tb, sched)
            chan = make_channel(cfg.channel_config(1, cfg.d2r_n_rx, chan_seed),
                                sig.duration_s, sig.sample_rate_hz)
            faded = _with_guard(apply_channel(sig, chan))
            bw = 2.0 * sched.chip_rate_cps
            ref = _inband_power_ref(sig, bw)
            noisy = add_awgn(faded, snr_db, ref, seed=np.random.default_rng(s_noise))
            got = receive_pdrch(noisy, sched)
        return not np.array_equal(got, tb)
    except AiotPhyError:
        return True


def _with_guard(sig):
    from .signal import BasebandSignal
    pad = np.zeros((sig.samples.shape[0], RX_GUARD_SAMPLES), dtype=np.complex128)
    return BasebandSignal(np.concatenate([sig.samples, pad], axis=1), sig.sample_rate_hz)


def _inband_power_ref(sig, bandwidth_hz: float) -> float:
    """SNR reference: ensemble faded power over the occupied duration and
    bandwidth.  The tap powers are normalized to unit average, so the
    expected receive power equals the clean occupied-signal power;
    per-realization measurement would cancel the fading statistics."""
    p = float(np.mean(np.abs(sig.samples) ** 2))
    return p * sig.sample_rate_hz / bandwidth_hz


def _run_batch(cfg: SimConfig, snr_db: float, snr_index: int,
               start: int, count: int) -> list[bool]:
    return [_trial_error(cfg, snr_db, snr_index, start + t) for t in range(count)]


def resolve_workers(n_workers: int | None) -> int:
    if n_workers is not None:
        return max(1, n_workers)
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def run_bler(cfg: SimConfig, n_workers: int | None = None,
             progress=None) -> list[BlerPoint]:
    """Monte-Carlo sweep over the configured SNR points."""
    workers = resolve_workers(n_workers)
    points = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for snr_index, snr_db in enumerate(cfg.snr_db_points):
            blocks = errors = 0
            while blocks < cfg.min_blocks and errors < cfg.max_block_errors:
                n_batches = max(1, workers)
                if pool is None:
                    results = [_run_batch(cfg, snr_db, snr_index, blocks, TRIAL_BATCH)]
                else:
                    futures = [
                        pool.submit(_run_batch, cfg, snr_db, snr_index,
                                    blocks + i * TRIAL_BATCH, TRIAL_BATCH)
                        for i in range(n_batches)
                    ]
                    results = [f.result() for f in futures]
                # merge in trial order; the stop rule sees whole batches
                for batch in results:
                    if blocks >= cfg.min_blocks or errors >= cfg.max_block_errors:
                        break
                    blocks += len(batch)
                    errors += sum(batch)
            points.append(BlerPoint(snr_db=snr_db, blocks=blocks, block_errors=errors))
            if progress is not None:
                progress(points[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return points


CSV_HEADER = "snr_db,blocks,block_errors,bler,ci95"


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def points_to_csv(points: list[BlerPoint]) -> str:
    lines = [CSV_HEADER]
    for p in points:
        lines.append(f"{_fmt(p.snr_db)},{p.blocks},{p.block_errors},"
                     f"{_fmt(p.bler)},{_fmt(p.ci95_halfwidth)}")
    return "\n".join(lines) + "\n"


def export_results(points: list[BlerPoint], path: str, fmt: str = "csv",
                   resolved_config: dict | None = None) -> None:
    """Write sweep results; JSON embeds the resolved config for provenance."""
    if not points:
        raise ConfigError("no points to export")
    if fmt == "csv":
        payload = points_to_csv(points)
    elif fmt == "json":
        body = {
            "points": [
                {"snr_db": p.snr_db, "blocks": p.blocks, "block_errors": p.block_errors,
                 "bler": p.bler, "ci95": p.ci95_halfwidth}
                for p in points
            ],
        }
        if resolved_config is not None:
            body["config"] = resolved_config
            body["config_hash"] = hash_config(resolved_config)
        payload = json.dumps(body, indent=2, sort_keys=True) + "\n"
    else:
        raise ConfigError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w") as f:
            f.write(payload)
    except OSError as e:
        raise AiotPhyError(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------------------
# key-value config file handling (Table-style parameter names)

_ENUM_FIELDS = {
    "link": Link,
    "thresholding": Thresholding,
    "combining": Combining,
    "channel_profile": ChannelProfile,
    "d2r_line": LineScheme,
    "d2r_modulation": D2rModulation,
}


def parse_snr_spec(spec: str) -> tuple[float, ...]:
    """Parse 'start:step:stop' (inclusive stop) or a comma list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad SNR range {spec!r}, expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("SNR step must be positive")
        return tuple(np.arange(start, stop + step / 2, step))
    return tuple(float(p) for p in spec.split(","))


def config_from_mapping(data: dict) -> SimConfig:
    kwargs = {}
    for key, value in data.items():
        if key == "snr_db":
            kwargs["snr_db_points"] = parse_snr_spec(str(value))
        elif key in _ENUM_FIELDS:
            try:
                kwargs[key] = _ENUM_FIELDS[key](str(value).lower())
            except ValueError as e:
                raise ConfigError(f"bad value {value!r} for {key}") from e
        elif key in SimConfig.__dataclass_fields__:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return SimConfig(**kwargs)


def load_config(path: str, overrides: dict | None = None) -> SimConfig:
    """Flat key-value YAML file; CLI overrides win."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config file must be a flat key: value mapping")
    if overrides:
        data.update(overrides)
    return config_from_mapping(data)
