"""Gated Hebbian plastic array: update rule, gate soundness, kernel coupling."""

import numpy as np
import pytest

import spikeloop as sl
from spikeloop.plasticity import (
    LearningGate,
    enable_plastic,
    plasticity_update,
)

OPEN = LearningGate(open=True)
CLOSED = LearningGate(open=False)


def counts_for(n, **at):
    c = np.zeros(n, dtype=np.int64)
    for k, v in at.items():
        c[int(k[1:])] = v
    return c


class TestEnable:
    def test_product_array_size(self):
        net = sl.build_network(16)
        arr = enable_plastic(net, range(5), range(5, 10), w_init=0.0)
        assert len(arr) == 25

    def test_zero_init_changes_nothing(self):
        a = sl.build_network(4)
        b = sl.build_network(4)
        enable_plastic(b, [0, 1], [2, 3], w_init=0.0)
        for net in (a, b):
            net.set_drive(0, 300.0)
            net.set_drive(1, 250.0)
        _, va = a.run(2000.0, probes=[2, 3])
        _, vb = b.run(2000.0, probes=[2, 3])
        assert np.array_equal(va, vb)

    def test_reenable_resets_weights(self):
        net = sl.build_network(8)
        arr = enable_plastic(net, [0], [1], w_init=1.0)
        arr.weights[:] = 40.0
        arr2 = enable_plastic(net, [0], [1], w_init=1.0)
        assert arr2.weight(0, 1) == 1.0
        # the network now simulates with the re-initialised array
        assert net.pl_w is arr2.weights

    def test_w_init_bounds_checked(self):
        net = sl.build_network(4)
        with pytest.raises(sl.SimulationError):
            enable_plastic(net, [0], [1], w_init=-1.0)
        with pytest.raises(sl.SimulationError):
            enable_plastic(net, [0], [9], w_init=0.0)

    def test_full_weight_acts_like_e4_synapse(self):
        # plastic tau matches the strong classes, so a synapse at E4 efficacy
        # must reproduce a non-plastic E4 connection exactly
        a = sl.build_network(2)
        a.connect(0, 1, "E4")
        b = sl.build_network(2)
        e4 = float(a.class_eff[3])
        enable_plastic(b, [0], [1], w_init=e4, w_max=e4)
        for net in (a, b):
            net.set_drive(0, 200.0)
        la, va = a.run(3000.0, probes=[1])
        lb, vb = b.run(3000.0, probes=[1])
        assert np.array_equal(va, vb)
        assert np.array_equal(la.neuron_ids, lb.neuron_ids)


class TestUpdateRule:
    def test_gate_closed_no_change(self):
        net = sl.build_network(8)
        arr = enable_plastic(net, [0, 1], [2, 3], w_init=0.5)
        before = arr.weights.copy()
        counts = counts_for(8, n0=50, n2=50)
        plasticity_update(arr, counts, CLOSED)
        assert np.array_equal(arr.weights, before)

    def test_pre_without_post_no_change(self):
        net = sl.build_network(8)
        arr = enable_plastic(net, [0], [1], w_init=0.0)
        plasticity_update(arr, counts_for(8, n0=50), OPEN)
        assert arr.weight(0, 1) == 0.0

    def test_post_without_pre_no_change(self):
        net = sl.build_network(8)
        arr = enable_plastic(net, [0], [1], w_init=0.0)
        plasticity_update(arr, counts_for(8, n1=50), OPEN)
        assert arr.weight(0, 1) == 0.0

    def test_coactive_windows_closed_form(self):
        net = sl.build_network(16)
        arr = enable_plastic(net, range(5), range(5, 10), w_init=0.0,
                             w_max=10.0)
        # LearnCmd[2] with the first two rate neurons co-active for k windows
        counts = counts_for(16, n2=20, n5=12, n6=12)
        k = 4
        for _ in range(k):
            plasticity_update(arr, counts, OPEN)
        expected = min(0.0 + k * arr.delta_w, arr.w_max)
        assert arr.weight(2, 5) == pytest.approx(expected)
        assert arr.weight(2, 6) == pytest.approx(expected)
        for pre in range(5):
            for post in range(5, 10):
                if pre == 2 and post in (5, 6):
                    continue
                assert arr.weight(pre, post) == 0.0

    def test_saturates_at_w_max(self):
        net = sl.build_network(4)
        arr = enable_plastic(net, [0], [1], w_init=0.0, w_max=1.0)
        counts = counts_for(4, n0=99, n1=99)
        for _ in range(25):
            plasticity_update(arr, counts, OPEN)
        assert arr.weight(0, 1) == 1.0

    def test_thresholds_are_inclusive(self):
        net = sl.build_network(4)
        arr = enable_plastic(net, [0], [1], w_init=0.0, w_max=1.0)
        plasticity_update(arr, counts_for(4, n0=3, n1=3), OPEN)
        assert arr.weight(0, 1) == pytest.approx(arr.delta_w)
        plasticity_update(arr, counts_for(4, n0=2, n1=3), OPEN)
        assert arr.weight(0, 1) == pytest.approx(arr.delta_w)

    def test_monotone_and_bounded_under_random_activity(self):
        rng = np.random.default_rng(3)
        net = sl.build_network(12)
        arr = enable_plastic(net, range(4), range(4, 8), w_init=0.2, w_max=1.0)
        prev = arr.weights.copy()
        for _ in range(200):
            counts = rng.integers(0, 8, size=12)
            gate = LearningGate(open=bool(rng.integers(0, 2)))
            plasticity_update(arr, counts, gate)
            assert np.all(arr.weights >= prev)
            assert np.all(arr.weights >= arr.w_min)
            assert np.all(arr.weights <= arr.w_max)
            prev = arr.weights.copy()

    def test_locality_permutation(self):
        # synapse (0, 4) must only depend on counts of 0, 4 and the gate
        def run(perm_seed):
            net = sl.build_network(12)
            arr = enable_plastic(net, [0], [4], w_init=0.0, w_max=1.0)
            rng = np.random.default_rng(77)
            perm_rng = np.random.default_rng(perm_seed)
            for _ in range(50):
                counts = rng.integers(0, 9, size=12)
                others = [i for i in range(12) if i not in (0, 4)]
                counts[others] = perm_rng.permutation(counts[others])
                plasticity_update(arr, counts, OPEN)
            return arr.weight(0, 4)

        assert run(1) == run(2) == run(3)


class TestGate:
    def test_open_requires_gating_activity(self):
        counts = counts_for(10, n3=5)
        assert LearningGate.from_counts(counts, gating=3).open
        assert not LearningGate.from_counts(counts_for(10, n3=2), gating=3).open

    def test_quiet_neurons_veto(self):
        counts = counts_for(10, n3=10, n7=5)
        assert not LearningGate.from_counts(counts, gating=3, quiet=[7]).open
        counts = counts_for(10, n3=10, n7=2)
        assert LearningGate.from_counts(counts, gating=3, quiet=[7]).open

    def test_gate_soundness_bit_identical_over_silent_interval(self):
        net = sl.build_network(8)
        arr = enable_plastic(net, [0, 1], [2, 3], w_init=0.3)
        rng = np.random.default_rng(5)
        before = arr.weights.tobytes()
        for _ in range(100):
            counts = rng.integers(0, 20, size=8)
            counts[5] = 0  # gating neuron silent throughout
            gate = LearningGate.from_counts(counts, gating=5, quiet=[6, 7])
            plasticity_update(arr, counts, gate)
        assert arr.weights.tobytes() == before
