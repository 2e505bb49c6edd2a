"""Random-access procedure tests: FSM transitions and round statistics."""

import numpy as np
import pytest

from aiotphy.random_access import (
    AccessMode,
    Device,
    DeviceState,
    InvalidState,
    Msg1,
    Msg2,
    NotAddressed,
    PagingMsg,
    PagingScope,
    device_handle_msg2,
    device_respond,
    resolve_contention,
    simulate_round,
)


def contention_page(k):
    return PagingMsg(mode=AccessMode.CONTENTION_BASED, n_occasions=k)


class TestDeviceRespond:
    def test_contention_free_uses_assignment(self):
        page = PagingMsg(mode=AccessMode.CONTENTION_FREE, n_occasions=8,
                         assigned_occasion=3)
        dev = Device(device_id=1, energy_available=True)
        msg = device_respond(dev, page, rng=0)
        assert msg.occasion == 3
        assert dev.state is DeviceState.AWAITING_MSG2

    def test_deenergized_stays_silent(self):
        dev = Device(device_id=1, energy_available=False)
        assert device_respond(dev, contention_page(4)) is None
        assert dev.state is DeviceState.IDLE

    def test_not_addressed(self):
        page = PagingMsg(scope=PagingScope.SINGLE, scope_id=9, n_occasions=2)
        with pytest.raises(NotAddressed):
            device_respond(Device(device_id=1, energy_available=True), page)

    def test_occasion_distribution_uniform(self):
        rng = np.random.default_rng(0)
        k, n = 10, 100_000
        counts = np.zeros(k)
        page = contention_page(k)
        for _ in range(n):
            dev = Device(device_id=0, energy_available=True)
            counts[device_respond(dev, page, rng).occasion] += 1
        expected = n / k
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # chi-square with k-1=9 dof: mean 9, sigma = sqrt(18)
        assert chi2 < 9 + 3 * np.sqrt(18)

    def test_piggyback_attached(self):
        dev = Device(device_id=0, energy_available=True)
        data = np.array([1, 0, 1], dtype=np.uint8)
        msg = device_respond(dev, contention_page(2), rng=1, piggyback=data)
        assert np.array_equal(msg.piggyback_data, data)


class TestResolveContention:
    def test_single_device_success(self):
        out = resolve_contention([Msg1(random_id=77, occasion=0)])
        assert len(out) == 1 and out[0].random_id == 77

    def test_distinct_ids_collide(self):
        msgs = [Msg1(random_id=1, occasion=4), Msg1(random_id=2, occasion=4)]
        assert resolve_contention(msgs) == []

    def test_identical_ids_false_echo(self):
        msgs = [Msg1(random_id=5, occasion=2), Msg1(random_id=5, occasion=2)]
        out = resolve_contention(msgs)
        assert len(out) == 1 and out[0].random_id == 5

    def test_grant_flag(self):
        out = resolve_contention([Msg1(random_id=1, occasion=0)], grant_d2r=True)
        assert out[0].d2r_grant


class TestHandleMsg2:
    def test_matching_echo_resolves(self):
        dev = Device(device_id=0, state=DeviceState.AWAITING_MSG2)
        own = Msg1(random_id=3, occasion=1)
        assert device_handle_msg2(dev, own, Msg2(3, 1)) is DeviceState.RESOLVED

    def test_other_id_fails(self):
        dev = Device(device_id=0, state=DeviceState.AWAITING_MSG2)
        assert device_handle_msg2(dev, Msg1(3, 1), Msg2(4, 1)) is DeviceState.FAILED

    def test_missing_msg2_fails(self):
        dev = Device(device_id=0, state=DeviceState.AWAITING_MSG2)
        assert device_handle_msg2(dev, Msg1(3, 1), None) is DeviceState.FAILED

    def test_invalid_state(self):
        dev = Device(device_id=0, state=DeviceState.IDLE)
        with pytest.raises(InvalidState):
            device_handle_msg2(dev, Msg1(3, 1), Msg2(3, 1))


class TestSimulateRound:
    def test_zero_devices(self):
        stats = simulate_round(0, contention_page(4))
        assert stats.responded == 0 and stats.resolved == 0

    def test_single_device_resolves(self):
        stats = simulate_round(1, contention_page(4), energize_prob=1.0, seed=1)
        assert stats.responded == 1 and stats.resolved == 1

    def test_determinism(self):
        a = simulate_round(10, contention_page(8), 0.7, seed=42)
        b = simulate_round(10, contention_page(8), 0.7, seed=42)
        assert (a.responded, a.resolved, a.collided, a.false_success) == \
               (b.responded, b.resolved, b.collided, b.false_success)

    def test_conservation(self):
        for seed in range(200):
            stats = simulate_round(12, contention_page(6), 0.8, seed=seed)
            assert stats.conserved

    def test_contention_free_never_collides(self):
        # distinct assignments modeled by giving each device its own round
        for i in range(5):
            page = PagingMsg(mode=AccessMode.CONTENTION_FREE, n_occasions=8,
                             assigned_occasion=i)
            stats = simulate_round(1, page, 1.0, seed=i)
            assert stats.collided == 0 and stats.resolved == 1

    @pytest.mark.parametrize("n,k", [(2, 4), (10, 16)])
    def test_birthday_no_collision_probability(self, n, k):
        rounds = 10_000
        p_exact = float(np.prod(1 - np.arange(n) / k))
        hits = 0
        for seed in range(rounds):
            stats = simulate_round(n, contention_page(k), 1.0, seed=seed)
            if stats.collided == 0 and stats.false_success == 0:
                hits += 1
        sigma = np.sqrt(rounds * p_exact * (1 - p_exact))
        assert abs(hits - rounds * p_exact) < 3 * sigma
