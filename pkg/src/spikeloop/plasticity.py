"""Plastic synapse array with gated, windowed Hebbian potentiation.

Weights live in [w_min, w_max] and only move while the learning gate is open.
The gate is a pure function of one readout window's spike counts: the
designated gating neuron must be busy and every other difference-readout
neuron quiet, which confines potentiation to windows where the feedback
controller has actually converged. Potentiation is rate-Hebbian: any enabled
synapse whose pre and post neurons both cleared their count thresholds in the
window steps up by delta_w, clamped at w_max. There is no depression and no
decay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import LADDER_SCALE, Network, SimulationError

THETA_PRE = 3       # spikes per 100 ms window
THETA_POST = 3
GATE_OPEN_MIN = 3   # gating neuron count needed to open
GATE_QUIET_MAX = 2  # max count tolerated on any quiet neuron

DEFAULT_W_MAX = 0.4 * LADDER_SCALE  # one full synapse acts like an E4 contact


@dataclass(frozen=True)
class LearningGate:
    """Window-level plasticity switch."""

    open: bool

    @classmethod
    def from_counts(cls, counts: np.ndarray, gating: int,
                    quiet: Iterable[int] = (),
                    open_threshold: int = GATE_OPEN_MIN,
                    quiet_limit: int = GATE_QUIET_MAX) -> "LearningGate":
        counts = np.asarray(counts)
        is_open = counts[gating] >= open_threshold
        for q in quiet:
            if counts[q] > quiet_limit:
                is_open = False
                break
        return cls(open=bool(is_open))


class PlasticArray:
    """Enabled plastic synapses as parallel (pre, post, weight) arrays.

    The weight array is shared in place with the simulation kernel, so
    potentiation between windows is visible to the network immediately.
    """

    def __init__(self, network: Network, pre_set: Sequence[int],
                 post_set: Sequence[int], w_init: float,
                 w_min: float = 0.0, w_max: float = DEFAULT_W_MAX,
                 delta_w: float | None = None,
                 theta_pre: int = THETA_PRE, theta_post: int = THETA_POST):
        if not (w_min <= w_init <= w_max):
            raise SimulationError("w_init must lie in [w_min, w_max]")
        pre_set = [network._check_index(i) for i in pre_set]
        post_set = [network._check_index(i) for i in post_set]
        if not pre_set or not post_set:
            raise SimulationError("pre_set and post_set must be non-empty")
        pairs = sorted((pre, post) for pre in set(pre_set) for post in set(post_set))
        self.pre = np.array([p for p, _ in pairs], dtype=np.int32)
        self.post = np.array([q for _, q in pairs], dtype=np.int32)
        self.weights = np.full(len(pairs), float(w_init))
        self.enabled = np.ones(len(pairs), dtype=np.bool_)
        self.w_min = float(w_min)
        self.w_max = float(w_max)
        self.w_init = float(w_init)
        self.delta_w = 0.1 * (w_max - w_min) if delta_w is None else float(delta_w)
        self.theta_pre = int(theta_pre)
        self.theta_post = int(theta_post)

        counts = np.bincount(self.pre, minlength=network.n)
        indptr = np.zeros(network.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        network.attach_plastic(indptr, self.post, self.weights)

    def __len__(self) -> int:
        return int(self.pre.size)

    def weight(self, pre: int, post: int) -> float:
        sel = (self.pre == pre) & (self.post == post)
        if not sel.any():
            raise SimulationError(f"no plastic synapse ({pre}, {post})")
        return float(self.weights[sel][0])

    def triplets(self) -> list[dict]:
        return [
            {"pre": int(p), "post": int(q), "weight": float(w)}
            for p, q, w in zip(self.pre, self.post, self.weights)
        ]


def enable_plastic(network: Network, pre_set: Sequence[int],
                   post_set: Sequence[int], w_init: float,
                   **kwargs) -> PlasticArray:
    """Enable the pre x post plastic array at w_init (re-enabling resets)."""
    return PlasticArray(network, pre_set, post_set, w_init, **kwargs)


def plasticity_update(array: PlasticArray, window_counts: np.ndarray,
                      gate: LearningGate) -> PlasticArray:
    """One window of gated Hebbian potentiation (in place, clamped)."""
    if not gate.open:
        return array
    counts = np.asarray(window_counts)
    hot = (array.enabled
           & (counts[array.pre] >= array.theta_pre)
           & (counts[array.post] >= array.theta_post))
    if hot.any():
        array.weights[hot] = np.minimum(array.weights[hot] + array.delta_w,
                                        array.w_max)
    return array
