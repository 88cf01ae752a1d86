import numpy as np
import pytest

from dcsit import ba, channel, strategies
from dcsit.errors import TooLargeError


def uniform_mac(nx1, nx2, ns, ns1, ns2, nsr, ny, seed=0):
    """Random valid DiscreteMAC with the given cardinalities."""
    rng = np.random.default_rng(seed)
    ch = rng.random((nx1, nx2, ns, ny)) + 0.1
    ch /= ch.sum(axis=3, keepdims=True)
    csi = rng.random((ns, ns1, ns2, nsr)) + 0.1
    csi /= csi.sum()
    return channel.DiscreteMAC(channel=ch, csi=csi)


class TestEnumeration:
    def test_binary_example_count(self):
        mac = channel.binary_additive_mac(0.5, 0.1, 0.1)
        alph = strategies.enumerate_strategies(mac)
        assert alph.size == 16  # 2^2 * 2^2

    def test_no_csit_count(self):
        mac = uniform_mac(3, 2, 2, 1, 1, 1, 4)
        assert strategies.enumerate_strategies(mac).size == 6

    def test_asymmetric_count(self):
        mac = uniform_mac(2, 2, 2, 2, 1, 1, 4)
        assert strategies.enumerate_strategies(mac).size == 8

    def test_mixed_radix_order(self):
        mac = channel.binary_additive_mac(0.5, 0.1, 0.1)
        alph = strategies.enumerate_strategies(mac)
        t1, t2 = alph.pair(0)
        assert np.array_equal(t1, [0, 0]) and np.array_equal(t2, [0, 0])
        # TX1 table digit for s1=0 varies fastest
        t1, t2 = alph.pair(1)
        assert np.array_equal(t1, [1, 0]) and np.array_equal(t2, [0, 0])
        t1, t2 = alph.pair(4)
        assert np.array_equal(t1, [0, 0]) and np.array_equal(t2, [1, 0])

    def test_duplicate_free(self):
        mac = channel.binary_additive_mac(0.5, 0.2, 0.3)
        f1, f2 = strategies.enumerate_strategies(mac).full_tables()
        seen = {tuple(np.concatenate([a, b])) for a, b in zip(f1, f2)}
        assert len(seen) == 16

    def test_cap_enforced(self):
        mac = uniform_mac(2, 2, 2, 32, 1, 1, 4)
        with pytest.raises(TooLargeError):
            strategies.enumerate_strategies(mac)
        # custom cap on a small alphabet
        small = channel.binary_additive_mac(0.5, 0.1, 0.1)
        with pytest.raises(TooLargeError):
            strategies.enumerate_strategies(small, cap=15)


class TestEquivalentDmc:
    def test_row_sums(self):
        for seed in range(5):
            mac = uniform_mac(2, 3, 2, 2, 2, 2, 3, seed=seed)
            dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
            assert dmc.matrix.shape == (2**2 * 3**2, 6)
            assert np.allclose(dmc.matrix.sum(axis=1), 1.0, atol=1e-12)
            assert dmc.matrix.min() >= 0.0

    def test_constant_sum_strategy(self):
        # noiseless CSIT: a strategy pair with t1(s)+t2(s)+s == 1 for both
        # states sends y=1 surely
        mac = channel.binary_additive_mac(0.5, 0.0, 0.0)
        alph = strategies.enumerate_strategies(mac)
        dmc = strategies.equivalent_dmc(mac, alph)
        found = 0
        for u in range(alph.size):
            t1, t2 = alph.pair(u)
            sums = [t1[0] + t2[0], t1[1] + t2[1] + 1]
            if sums == [1, 1]:
                assert dmc.matrix[u, 1] == pytest.approx(1.0, abs=1e-12)
                found += 1
        assert found > 0

    def test_degenerate_state(self):
        # q=0 freezes s=0; strategies with t1(0)+t2(0)=2 give y=2 surely
        mac = channel.binary_additive_mac(0.0, 0.0, 0.0)
        alph = strategies.enumerate_strategies(mac)
        dmc = strategies.equivalent_dmc(mac, alph)
        for u in range(alph.size):
            t1, t2 = alph.pair(u)
            if t1[0] + t2[0] == 2:
                assert dmc.matrix[u, 2] == pytest.approx(1.0, abs=1e-12)

    def test_augmented_output_carries_csir(self):
        # receiver that sees the state splits the output columns by sR
        mac = uniform_mac(2, 2, 2, 1, 1, 2, 3, seed=3)
        dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
        assert dmc.ny == 3 and dmc.nsr == 2
        assert dmc.matrix.shape[1] == 6


class TestDeduplicate:
    def test_blind_channel_collapses(self):
        # with useless CSIT many strategy pairs induce identical rows
        mac = channel.binary_additive_mac(0.5, 0.5, 0.5)
        dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
        reduced, keep = strategies.deduplicate(dmc)
        assert reduced.n_inputs < dmc.n_inputs
        assert np.array_equal(np.sort(keep), keep)
        assert np.array_equal(reduced.matrix, dmc.matrix[keep])

    def test_capacity_preserved(self):
        for eps in [0.0, 0.2, 0.5]:
            mac = channel.binary_additive_mac(0.5, eps, eps)
            dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
            reduced, _ = strategies.deduplicate(dmc)
            c_full = ba.ba_capacity(dmc.matrix).capacity_nats
            c_red = ba.ba_capacity(reduced.matrix).capacity_nats
            assert abs(c_full - c_red) <= 1e-9


class TestLabelInvariance:
    def test_s1_permutation(self):
        mac = channel.binary_additive_mac(0.5, 0.1, 0.3)
        perm = channel.DiscreteMAC(channel=mac.channel, csi=mac.csi[:, ::-1])
        c0 = ba.discrete_common_capacity(mac).capacity_nats
        c1 = ba.discrete_common_capacity(perm).capacity_nats
        assert abs(c0 - c1) <= 1e-9

    def test_strategy_index_permutation(self):
        mac = channel.binary_additive_mac(0.5, 0.1, 0.2)
        dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
        rng = np.random.default_rng(4)
        shuffled = dmc.matrix[rng.permutation(dmc.n_inputs)]
        c0 = ba.ba_capacity(dmc.matrix).capacity_nats
        c1 = ba.ba_capacity(shuffled).capacity_nats
        assert abs(c0 - c1) <= 1e-9


def test_json_export_roundtrips():
    mac = channel.binary_additive_mac(0.5, 0.1, 0.1)
    dmc = strategies.equivalent_dmc(mac, strategies.enumerate_strategies(mac))
    obj = strategies.strategy_dmc_to_json(dmc)
    back = channel.channel_from_json(obj)
    assert np.allclose(back.channel[:, 0, 0, :], dmc.matrix, atol=1e-15)
