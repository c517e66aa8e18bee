"""Mismatch model, characterization sweep, similar-neuron selection."""

import itertools

import numpy as np
import pytest

import spikeloop as sl
from spikeloop.mismatch import (
    DEFAULT_MISMATCH_CV,
    MismatchModel,
    RateProfile,
    SelectionError,
    apply_mismatch,
    characterize,
    select_similar,
)


class TestApplyMismatch:
    def test_cv_zero_is_identity(self):
        net = sl.build_network(16)
        apply_mismatch(net, MismatchModel(0.0, seed=1))
        assert np.all(net.gain == 1.0)

    def test_same_seed_same_gains(self):
        g1 = MismatchModel(0.2, seed=9).sample_gains(64)
        g2 = MismatchModel(0.2, seed=9).sample_gains(64)
        g3 = MismatchModel(0.2, seed=10).sample_gains(64)
        assert np.array_equal(g1, g2)
        assert not np.array_equal(g1, g3)

    def test_gains_positive_median_one(self):
        g = MismatchModel(0.5, seed=4).sample_gains(20001)
        assert np.all(g > 0)
        assert np.median(g) == pytest.approx(1.0, rel=0.05)

    def test_negative_cv_rejected(self):
        with pytest.raises(sl.SimulationError):
            MismatchModel(-0.1, seed=0).sample_gains(4)

    def test_calibrated_spread(self):
        net = sl.build_network(256)
        apply_mismatch(net, MismatchModel(DEFAULT_MISMATCH_CV, seed=0))
        prof = characterize(net, 200.0, 10_000.0)
        assert prof.mean == pytest.approx(94.7, rel=0.10)
        assert prof.std == pytest.approx(11.9, rel=0.15)


class TestCharacterize:
    def test_uniform_network_uniform_rates(self):
        net = sl.build_network(32)
        prof = characterize(net, 200.0, 5000.0)
        assert prof.rates.max() - prof.rates.min() < 1.0

    def test_zero_stimulus_zero_profile(self):
        net = sl.build_network(8)
        prof = characterize(net, 0.0, 5000.0)
        assert np.all(prof.rates == 0.0)

    def test_side_effect_free(self):
        net = sl.build_network(8)
        net.set_drive(3, 120.0, pattern="poisson", seed=5)
        net.connect(0, 1, "E4")
        net.run(500.0)
        before = net.snapshot()
        step_before = net.step_idx
        characterize(net, 200.0, 5000.0)
        after = net.snapshot()
        assert net.step_idx == step_before
        for key in before:
            assert np.array_equal(before[key], after[key]), key

    def test_duration_precondition(self):
        net = sl.build_network(4)
        with pytest.raises(sl.SimulationError):
            characterize(net, 200.0, 1000.0)

    def test_estimates_converge_with_duration(self):
        net = sl.build_network(64)
        apply_mismatch(net, MismatchModel(DEFAULT_MISMATCH_CV, seed=2))
        p1 = characterize(net, 200.0, 5000.0)
        p2 = characterize(net, 200.0, 10_000.0)
        busy = p1.rates > 20.0
        rel = np.abs(p2.rates[busy] - p1.rates[busy]) / p1.rates[busy]
        assert np.all(rel < 0.05)


class TestSelectSimilar:
    def test_obvious_tightest_pair(self):
        prof = RateProfile(np.array([90.0, 91.0, 100.0, 110.0]), 200.0, 5000.0)
        assert sorted(select_similar(prof, 2, 5.0)) == [0, 1]

    def test_uniform_profile_band_zero(self):
        prof = RateProfile(np.full(10, 50.0), 200.0, 5000.0)
        chosen = select_similar(prof, 4, 0.0)
        assert len(chosen) == 4
        assert len(set(chosen)) == 4

    def test_infeasible_tolerance_reports_band(self):
        prof = RateProfile(np.array([10.0, 20.0, 30.0]), 200.0, 5000.0)
        with pytest.raises(SelectionError) as exc:
            select_similar(prof, 2, 5.0)
        assert exc.value.min_band == pytest.approx(10.0)

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = int(rng.integers(4, 13))
            k = int(rng.integers(2, n + 1))
            rates = rng.uniform(0, 100, size=n).round(1)
            prof = RateProfile(rates, 200.0, 5000.0)
            chosen = select_similar(prof, k, np.inf)
            band = rates[chosen].max() - rates[chosen].min()
            best = min(max(rates[list(c)]) - min(rates[list(c)])
                       for c in itertools.combinations(range(n), k))
            assert band == pytest.approx(best)

    def test_selection_on_calibrated_profile(self):
        net = sl.build_network(256)
        apply_mismatch(net, MismatchModel(DEFAULT_MISMATCH_CV, seed=0))
        prof = characterize(net, 200.0, 10_000.0)
        chosen = select_similar(prof, 90, 10.0)
        assert len(chosen) == 90
        band = prof.rates[chosen].max() - prof.rates[chosen].min()
        assert band <= 10.0

    def test_k_bounds(self):
        prof = RateProfile(np.array([1.0, 2.0]), 200.0, 5000.0)
        with pytest.raises(sl.SimulationError):
            select_similar(prof, 3, 1.0)


class TestRateProfileCsv:
    def test_export_plain_and_ordered(self, tmp_path):
        prof = RateProfile(np.array([5.0, 1.0, 3.0]), 200.0, 5000.0)
        p = tmp_path / "profile.csv"
        prof.to_csv(p)
        rows = p.read_text().splitlines()
        assert rows[0] == "neuron_id,rate_hz"
        assert [r.split(",")[0] for r in rows[1:]] == ["0", "1", "2"]
        prof.to_csv(p, ordered=True)
        rows = p.read_text().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["1", "2", "0"]
