"""Reader/device state machines for the random-access procedure.

The reader pages devices; energized, addressed devices answer with a
16-bit random ID in a chosen access occasion (Msg1), and the reader
echoes the ID back (Msg2) to resolve contention.  Occasions are abstract
slots: no waveform is simulated at this layer, and a round is fully
deterministic given its seed.

Collision model: an occasion holding two or more Msg1 with differing IDs
decodes to nothing (no Msg2); if all IDs in the occasion happen to be
identical the echo matches every sender and they all wrongly resolve,
which is counted separately as false success.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError

RANDOM_ID_BITS = 16


class PagingScope(Enum):
    SINGLE = "single"
    GROUP = "group"
    ALL = "all"


class AccessMode(Enum):
    CONTENTION_BASED = "contention-based"
    CONTENTION_FREE = "contention-free"


class DeviceState(Enum):
    IDLE = "idle"
    ENERGIZED = "energized"
    AWAITING_MSG2 = "awaiting-msg2"
    RESOLVED = "resolved"
    FAILED = "failed"


@dataclass
class PagingMsg:
    scope: PagingScope = PagingScope.ALL
    scope_id: int | None = None
    mode: AccessMode = AccessMode.CONTENTION_BASED
    n_occasions: int = 1
    assigned_occasion: int | None = None

    def __post_init__(self):
        if self.n_occasions < 1:
            raise ConfigError("n_occasions must be >= 1")
        if self.scope is not PagingScope.ALL and self.scope_id is None:
            raise ConfigError(f"{self.scope.value} paging needs a scope_id")
        if self.mode is AccessMode.CONTENTION_FREE and self.assigned_occasion is None:
            raise ConfigError("contention-free paging needs an assigned occasion")


@dataclass
class Msg1:
    random_id: int
    occasion: int
    piggyback_data: np.ndarray | None = None


@dataclass
class Msg2:
    random_id: int
    occasion: int
    d2r_grant: bool = False


@dataclass
class Device:
    device_id: int
    group_id: int = 0
    state: DeviceState = DeviceState.IDLE
    energy_available: bool = False


class InvalidState(ConfigError):
    """Device asked to handle an event its state does not allow."""


class NotAddressed(ConfigError):
    """Paging message does not address this device."""


def _is_addressed(dev: Device, page: PagingMsg) -> bool:
    if page.scope is PagingScope.ALL:
        return True
    if page.scope is PagingScope.SINGLE:
        return dev.device_id == page.scope_id
    return dev.group_id == page.scope_id


def device_respond(dev: Device, page: PagingMsg,
                   rng: int | np.random.Generator = 0,
                   piggyback: np.ndarray | None = None) -> Msg1 | None:
    """Device reaction to paging: Msg1, or None when it has no energy."""
    if not _is_addressed(dev, page):
        raise NotAddressed(f"device {dev.device_id} not addressed")
    if not dev.energy_available:
        return None
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    random_id = int(rng.integers(0, 1 << RANDOM_ID_BITS))
    if page.mode is AccessMode.CONTENTION_FREE:
        occasion = int(page.assigned_occasion)
    else:
        occasion = int(rng.integers(0, page.n_occasions))
    dev.state = DeviceState.AWAITING_MSG2
    return Msg1(random_id=random_id, occasion=occasion, piggyback_data=piggyback)


def resolve_contention(msg1s: list[Msg1], grant_d2r: bool = False) -> list[Msg2]:
    """Reader side of Msg2: echo unambiguous occasions, stay silent on
    collisions."""
    by_occasion: dict[int, list[Msg1]] = {}
    for m in msg1s:
        by_occasion.setdefault(m.occasion, []).append(m)
    out = []
    for occ, group in sorted(by_occasion.items()):
        ids = {m.random_id for m in group}
        if len(ids) == 1:
            out.append(Msg2(random_id=group[0].random_id, occasion=occ,
                            d2r_grant=grant_d2r))
    return out


def device_handle_msg2(dev: Device, own: Msg1, msg2: Msg2 | None) -> DeviceState:
    """Contention-resolution outcome for one device."""
    if dev.state is not DeviceState.AWAITING_MSG2:
        raise InvalidState(f"device {dev.device_id} is {dev.state.value}")
    if msg2 is not None and msg2.occasion == own.occasion \
            and msg2.random_id == own.random_id:
        dev.state = DeviceState.RESOLVED
    else:
        dev.state = DeviceState.FAILED
    return dev.state


@dataclass
class RoundStats:
    n_devices: int
    responded: int = 0
    resolved: int = 0
    collided: int = 0
    false_success: int = 0
    id_mismatch: int = 0
    occasions: dict = field(default_factory=dict, repr=False)

    @property
    def conserved(self) -> bool:
        return self.responded == (self.resolved + self.collided
                                  + self.false_success + self.id_mismatch)


def simulate_round(n_devices: int, page: PagingMsg, energize_prob: float = 1.0,
                   seed: int = 0) -> RoundStats:
    """One paging round over a fresh device population."""
    if n_devices < 0:
        raise ConfigError("n_devices must be >= 0")
    if not 0.0 <= energize_prob <= 1.0:
        raise ConfigError("energize_prob must be a probability")
    rng = np.random.default_rng(seed)
    stats = RoundStats(n_devices=n_devices)

    devices = [Device(device_id=i, energy_available=bool(rng.random() < energize_prob))
               for i in range(n_devices)]
    msg1s: list[tuple[Device, Msg1]] = []
    for dev in devices:
        if not _is_addressed(dev, page):
            continue
        m = device_respond(dev, page, rng)
        if m is not None:
            msg1s.append((dev, m))
    stats.responded = len(msg1s)

    msg2s = {m.occasion: m for m in resolve_contention([m for _, m in msg1s])}
    by_occasion: dict[int, list[Msg1]] = {}
    for _, m in msg1s:
        by_occasion.setdefault(m.occasion, []).append(m)
    stats.occasions = {occ: len(g) for occ, g in by_occasion.items()}

    for dev, own in msg1s:
        echo = msg2s.get(own.occasion)
        state = device_handle_msg2(dev, own, echo)
        group_size = len(by_occasion[own.occasion])
        if state is DeviceState.RESOLVED:
            if group_size == 1:
                stats.resolved += 1
            else:
                stats.false_success += 1
        elif echo is None:
            stats.collided += 1
        else:
            stats.id_mismatch += 1
    return stats
