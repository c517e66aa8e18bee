"""Per-neuron fabrication mismatch: model, characterization sweep, selection.

Identically configured analog neurons respond differently; the model folds
all of that variability into one multiplicative gain per neuron, sampled from
a lognormal with median 1 so that calibration (ladder scale) and mismatch
(spread) stay orthogonal. The characterization sweep drives every neuron with
the same regular stimulus and records per-neuron firing rates; a sorted
sliding window then picks the most similar k neurons for population layouts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Network, SimulationError

# Calibrated so the 200 Hz sweep over 256 mismatched neurons reproduces the
# observed rate spread (std/mean ~= 11.9/94.7). See scripts/calibrate.py.
DEFAULT_MISMATCH_CV = 0.126
CHARACTERIZE_RATE_HZ = 200.0


class SelectionError(SimulationError):
    """No k-subset fits the requested tolerance; carries the best achievable band."""

    def __init__(self, k: int, tolerance: float, min_band: float):
        self.min_band = float(min_band)
        super().__init__(
            f"no {k}-subset within {tolerance:g} Hz; "
            f"minimum achievable band is {min_band:g} Hz"
        )


@dataclass
class MismatchModel:
    """Lognormal gain spread: median gain 1.0, spread set by the CV."""

    coefficient_of_variation: float = DEFAULT_MISMATCH_CV
    seed: int = 0

    def sample_gains(self, n: int) -> np.ndarray:
        cv = self.coefficient_of_variation
        if cv < 0:
            raise SimulationError("coefficient_of_variation must be >= 0")
        if cv == 0:
            return np.ones(n)
        sigma = np.sqrt(np.log1p(cv * cv))
        rng = np.random.default_rng(self.seed)
        return np.exp(sigma * rng.standard_normal(n))


@dataclass
class RateProfile:
    """Per-neuron firing rates under a standard stimulus."""

    rates: np.ndarray
    stimulus_rate: float
    duration_ms: float

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(self.rates < 0):
            raise SimulationError("rates must be >= 0")

    @property
    def mean(self) -> float:
        return float(self.rates.mean())

    @property
    def std(self) -> float:
        return float(self.rates.std())

    def to_csv(self, path, ordered: bool = False) -> None:
        """Write `neuron_id,rate_hz`; ordered=True sorts by rate for plotting."""
        idx = np.argsort(self.rates, kind="stable") if ordered \
            else np.arange(self.rates.size)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["neuron_id", "rate_hz"])
            for i in idx:
                w.writerow([int(i), f"{self.rates[i]:.6f}"])


def apply_mismatch(network: Network, model: MismatchModel) -> Network:
    """Replace every neuron's gain with an independent sample (seeded)."""
    network.set_gains(model.sample_gains(network.n))
    return network


def characterize(network: Network, stimulus_rate: float = CHARACTERIZE_RATE_HZ,
                 duration_ms: float = 10_000.0) -> RateProfile:
    """Drive every neuron at the stimulus rate and record mean firing rates.

    Side-effect free: network state (including drives and the clock) is
    restored afterward.
    """
    if duration_ms < 5000.0:
        raise SimulationError("characterization needs at least 5 s for stable rates")
    if stimulus_rate < 0:
        raise SimulationError("stimulus rate must be >= 0")
    snap = network.snapshot()
    step0 = network.step_idx
    try:
        network.reset_state()
        network.clear_drives()
        for i in range(network.n):
            network.set_drive(i, stimulus_rate)
        log, _ = network.run(duration_ms)
        counts = np.bincount(log.neuron_ids, minlength=network.n)
        rates = counts / (duration_ms * 1e-3)
    finally:
        network.restore(snap)
        network.step_idx = step0
    return RateProfile(rates, stimulus_rate, duration_ms)


def select_similar(profile: RateProfile, k: int, tolerance: float) -> list[int]:
    """Indices of the k most similar neurons (minimum rate range).

    The optimal k-subset of a 1-D statistic is a window of the sorted rates;
    the minimal window is found by a linear slide. Raises SelectionError with
    the achievable minimum if it exceeds the tolerance.
    """
    n = profile.rates.size
    if not 1 <= k <= n:
        raise SimulationError(f"k must be in 1..{n}")
    order = np.argsort(profile.rates, kind="stable")
    sorted_rates = profile.rates[order]
    spans = sorted_rates[k - 1:] - sorted_rates[:n - k + 1]
    best = int(np.argmin(spans))
    min_band = float(spans[best])
    if min_band > tolerance:
        raise SelectionError(k, tolerance, min_band)
    return [int(i) for i in order[best:best + k]]


def calibrate_cv(target_ratio: float = 11.9 / 94.7, n_neurons: int = 256,
                 duration_ms: float = 10_000.0, seed: int = 0,
                 rel_tol: float = 0.05, max_iter: int = 24) -> float:
    """Bisect the lognormal CV until the sweep's std/mean matches the target."""
    from .core import build_network

    def ratio(cv: float) -> float:
        net = build_network(n_neurons)
        apply_mismatch(net, MismatchModel(cv, seed))
        prof = characterize(net, CHARACTERIZE_RATE_HZ, duration_ms)
        return prof.std / prof.mean

    lo, hi = 0.01, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = ratio(mid)
        if abs(r - target_ratio) / target_ratio < rel_tol:
            return mid
        if r < target_ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
