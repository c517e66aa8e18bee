"""Fixed-timestep emulation of a small population of adaptive LIF neurons.

The device model: up to N spiking neurons (256 by default), a shared table of
exactly 8 discrete synaptic weight classes (4 excitatory, 4 inhibitory), an
optional array of plastic synapses, and per-neuron external drives that hit a
dedicated pair of virtual input synapses (one excitatory, one inhibitory).
Every spike is logged as an address event: (neuron index, microsecond
timestamp).

Membrane dynamics per neuron (forward Euler, default dt = 0.1 ms):

    dV/dt      = (V_rest - V)/tau_m + gain * (I_syn - I_adapt)
    dI_adapt/dt = -I_adapt / tau_adapt

with spike-and-reset at the threshold, a post-spike adaptation increment, and
an absolute refractory period. Synaptic traces decay with exact exponential
factors so that a trace equals the sum of decayed kernels of its input spikes.

Simulations are deterministic: equal topology, parameters, drives, seeds and
dt produce bit-identical event logs (regardless of the kernel backend).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels

EXCITATORY = 0
INHIBITORY = 1

REGULAR = 0
POISSON = 1

_POLARITY = {"excitatory": EXCITATORY, "inhibitory": INHIBITORY}
_PATTERN = {"regular": REGULAR, "poisson": POISSON}

CLASS_LABELS = ("E1", "E2", "E3", "E4", "I1", "I2", "I3", "I4")


class SimulationError(ValueError):
    """Raised for invalid parameters, indices or preconditions."""


@dataclass
class NeuronParams:
    """Adaptive LIF parameters for one neuron. Times in ms, potentials in a.u."""

    membrane_tau: float = 20.0
    threshold: float = 1.0
    reset_potential: float = 0.0
    resting_potential: float = 0.0
    refractory_period: float = 2.0
    adaptation_increment: float = 0.05
    adaptation_tau: float = 100.0
    gain: float = 1.0

    def validate(self) -> None:
        if self.membrane_tau <= 0 or self.adaptation_tau <= 0:
            raise SimulationError("time constants must be positive")
        if self.refractory_period < 0:
            raise SimulationError("refractory_period must be >= 0")
        if self.threshold <= self.reset_potential:
            raise SimulationError("threshold must exceed reset_potential")
        if self.gain <= 0:
            raise SimulationError("gain must be positive")


@dataclass(frozen=True)
class WeightClass:
    """One of the 8 device-wide synapse classes: a signed efficacy and a tau."""

    label: str
    efficacy: float
    synaptic_tau: float

    def validate(self) -> None:
        if self.label not in CLASS_LABELS:
            raise SimulationError(f"unknown weight class label {self.label!r}")
        if self.synaptic_tau <= 0:
            raise SimulationError(f"class {self.label}: synaptic_tau must be positive")
        excit = self.label.startswith("E")
        if excit and self.efficacy < 0:
            raise SimulationError(f"class {self.label}: efficacy must be >= 0")
        if not excit and self.efficacy > 0:
            raise SimulationError(f"class {self.label}: efficacy must be <= 0")


class Event(NamedTuple):
    """Address event: emitting neuron index and timestamp in microsecond ticks."""

    neuron_id: int
    timestamp: int


class EventLog:
    """Append-only spike log ordered by timestamp (ids ascending within a step)."""

    def __init__(self, neuron_ids=None, timestamps=None):
        self._chunks_id = []
        self._chunks_ts = []
        self._ids = np.empty(0, dtype=np.int32) if neuron_ids is None else np.asarray(neuron_ids, dtype=np.int32)
        self._ts = np.empty(0, dtype=np.int64) if timestamps is None else np.asarray(timestamps, dtype=np.int64)

    def append_batch(self, ids: np.ndarray, ts: np.ndarray) -> None:
        if ids.size:
            self._chunks_id.append(np.asarray(ids, dtype=np.int32))
            self._chunks_ts.append(np.asarray(ts, dtype=np.int64))

    def _consolidate(self) -> None:
        if self._chunks_id:
            self._ids = np.concatenate([self._ids] + self._chunks_id)
            self._ts = np.concatenate([self._ts] + self._chunks_ts)
            self._chunks_id = []
            self._chunks_ts = []

    @property
    def neuron_ids(self) -> np.ndarray:
        self._consolidate()
        return self._ids

    @property
    def timestamps(self) -> np.ndarray:
        self._consolidate()
        return self._ts

    def __len__(self) -> int:
        self._consolidate()
        return int(self._ids.size)

    def __iter__(self) -> Iterator[Event]:
        ids, ts = self.neuron_ids, self.timestamps
        for i in range(ids.size):
            yield Event(int(ids[i]), int(ts[i]))

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.neuron_ids[i]), int(self.timestamps[i]))

    def extend(self, other: "EventLog") -> None:
        self.append_batch(other.neuron_ids, other.timestamps)

    def to_csv(self, path) -> None:
        ids, ts = self.neuron_ids, self.timestamps
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["neuron_id", "timestamp_us"])
            for i in range(ids.size):
                w.writerow([int(ids[i]), int(ts[i])])

    @classmethod
    def from_csv(cls, path) -> "EventLog":
        ids, ts = [], []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                ids.append(int(row[0]))
                ts.append(int(row[1]))
        return cls(np.array(ids, dtype=np.int32), np.array(ts, dtype=np.int64))


# Efficacy ladder scale calibrated by bisection so a default neuron driven at
# 200 Hz (regular, excitatory input synapse) fires at ~94.7 Hz.
LADDER_SCALE = 178.8


def default_weight_classes(scale: float = LADDER_SCALE,
                           taus_e: Sequence[float] = (10.0, 10.0, 60.0, 30.0),
                           taus_i: Sequence[float] = (10.0, 10.0, 30.0, 30.0),
                           ) -> list[WeightClass]:
    """Geometric efficacy ladder {0.05, 0.1, 0.2, 0.4} * scale, mirrored for I*.

    The stronger classes default to slower synaptic taus: relays wired with a
    single synapse per hop need the longer integration window, and the
    slowest excitatory class carries the grid coincidence inputs so a relay
    handoff survives the presynaptic population dying out.
    """
    ladder = (0.05, 0.1, 0.2, 0.4)
    classes = [WeightClass(f"E{i+1}", ladder[i] * scale, taus_e[i]) for i in range(4)]
    classes += [WeightClass(f"I{i+1}", -ladder[i] * scale, taus_i[i]) for i in range(4)]
    return classes


class Network:
    """A population of adaptive LIF neurons with class-labelled synapses.

    Construct through :func:`build_network`. Mutating operations (connect,
    set_drive, parameter edits) may be interleaved with simulation; the
    global step counter and all state persist across ``run`` calls, so
    running 1 s twice is equivalent to running 2 s once.
    """

    def __init__(self, n_neurons: int, default_params: NeuronParams,
                 weight_classes: Sequence[WeightClass], dt_ms: float = 0.1):
        if n_neurons < 1:
            raise SimulationError("n_neurons must be >= 1")
        default_params.validate()
        self._validate_classes(weight_classes)
        if dt_ms <= 0:
            raise SimulationError("dt must be positive")

        self.n = int(n_neurons)
        self.dt_ms = float(dt_ms)

        by_label = {c.label: c for c in weight_classes}
        self.classes = [by_label[l] for l in CLASS_LABELS]
        self.class_eff = np.array([c.efficacy for c in self.classes])
        self.class_tau = np.array([c.synaptic_tau for c in self.classes])

        # Virtual input synapse pair per neuron (excitatory, inhibitory).
        e4 = by_label["E4"]
        self.input_efficacy = np.array([abs(e4.efficacy), -abs(e4.efficacy)])
        self.input_tau = np.array([10.0, 10.0])

        self.plastic_tau = 30.0

        n = self.n
        self.tau_m = np.full(n, default_params.membrane_tau)
        self.threshold = np.full(n, default_params.threshold)
        self.v_reset = np.full(n, default_params.reset_potential)
        self.v_rest = np.full(n, default_params.resting_potential)
        self.refractory = np.full(n, default_params.refractory_period)
        self.adapt_inc = np.full(n, default_params.adaptation_increment)
        self.adapt_tau = np.full(n, default_params.adaptation_tau)
        self.gain = np.full(n, default_params.gain)

        # Dynamic state.
        self.v = self.v_rest.copy()
        self.adapt = np.zeros(n)
        self.refrac_left = np.zeros(n, dtype=np.int32)
        self.traces = np.zeros((n, 8))
        self.in_traces = np.zeros((n, 2))
        self.plastic_trace = np.zeros(n)
        self.pending = np.zeros(n, dtype=np.bool_)
        self.step_idx = 0

        # External drives: one slot per (neuron, polarity).
        self.drive_rate = np.zeros((n, 2))
        self.drive_pattern = np.zeros((n, 2), dtype=np.int8)
        self.drive_key = np.zeros((n, 2), dtype=np.uint64)
        self.drive_seed = np.zeros((n, 2), dtype=np.int64)

        # Sparse class-labelled connections, compiled to CSR on demand.
        self._conn: dict[tuple[int, int], int] = {}
        self._conn_dirty = True
        self._conn_indptr = np.zeros(n + 1, dtype=np.int64)
        self._conn_post = np.empty(0, dtype=np.int32)
        self._conn_cls = np.empty(0, dtype=np.int8)

        # Plastic synapse array (attached by the plasticity module).
        self.pl_indptr = np.zeros(n + 1, dtype=np.int64)
        self.pl_post = np.empty(0, dtype=np.int32)
        self.pl_w = np.empty(0)

        self._derived_dt = None
        self._derived = None

    # -- validation helpers -------------------------------------------------

    @staticmethod
    def _validate_classes(classes: Sequence[WeightClass]) -> None:
        if len(classes) != 8:
            raise SimulationError("exactly 8 weight classes required")
        labels = sorted(c.label for c in classes)
        if labels != sorted(CLASS_LABELS):
            raise SimulationError("weight classes must carry labels E1..E4, I1..I4")
        for c in classes:
            c.validate()

    def _check_index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise SimulationError(f"neuron index {i} out of range 0..{self.n - 1}")
        return i

    # -- configuration ops ---------------------------------------------------

    def connect(self, pre: int, post: int, cls: str) -> None:
        """Install (or overwrite) a non-plastic connection of the given class."""
        pre = self._check_index(pre)
        post = self._check_index(post)
        if cls not in CLASS_LABELS:
            raise SimulationError(f"unknown weight class label {cls!r}")
        self._conn[(pre, post)] = CLASS_LABELS.index(cls)
        self._conn_dirty = True

    def connection_class(self, pre: int, post: int):
        idx = self._conn.get((pre, post))
        return None if idx is None else CLASS_LABELS[idx]

    @property
    def n_connections(self) -> int:
        return len(self._conn)

    def connections(self) -> dict[tuple[int, int], str]:
        return {k: CLASS_LABELS[v] for k, v in self._conn.items()}

    def set_drive(self, neuron: int, rate: float, polarity: str = "excitatory",
                  pattern: str = "regular", seed: int = 0) -> None:
        """Configure the external drive on one virtual input synapse.

        Rate 0 removes the drive. Poisson drives are reproducible per seed;
        regular drives deliver exactly floor(rate * t) spikes by time t.
        """
        neuron = self._check_index(neuron)
        if rate < 0:
            raise SimulationError("drive rate must be >= 0")
        if polarity not in _POLARITY:
            raise SimulationError(f"unknown polarity {polarity!r}")
        if pattern not in _PATTERN:
            raise SimulationError(f"unknown pattern {pattern!r}")
        p = _POLARITY[polarity]
        self.drive_rate[neuron, p] = float(rate)
        self.drive_pattern[neuron, p] = _PATTERN[pattern]
        self.drive_seed[neuron, p] = int(seed)
        self.drive_key[neuron, p] = _kernels.drive_stream_key(int(seed), neuron, p)
        if rate == 0:
            self.drive_pattern[neuron, p] = REGULAR
        self._derived = None  # drive_pexp depends on rates

    def clear_drives(self) -> None:
        self.drive_rate[:] = 0.0
        self.drive_pattern[:] = REGULAR
        self._derived = None

    def set_params(self, neuron: int, **kw) -> None:
        """Override individual neuron parameters (validated as a whole)."""
        neuron = self._check_index(neuron)
        current = self.get_params(neuron)
        updated = replace(current, **kw)
        updated.validate()
        self.tau_m[neuron] = updated.membrane_tau
        self.threshold[neuron] = updated.threshold
        self.v_reset[neuron] = updated.reset_potential
        self.v_rest[neuron] = updated.resting_potential
        self.refractory[neuron] = updated.refractory_period
        self.adapt_inc[neuron] = updated.adaptation_increment
        self.adapt_tau[neuron] = updated.adaptation_tau
        self.gain[neuron] = updated.gain
        self._derived = None

    def get_params(self, neuron: int) -> NeuronParams:
        neuron = self._check_index(neuron)
        return NeuronParams(
            membrane_tau=float(self.tau_m[neuron]),
            threshold=float(self.threshold[neuron]),
            reset_potential=float(self.v_reset[neuron]),
            resting_potential=float(self.v_rest[neuron]),
            refractory_period=float(self.refractory[neuron]),
            adaptation_increment=float(self.adapt_inc[neuron]),
            adaptation_tau=float(self.adapt_tau[neuron]),
            gain=float(self.gain[neuron]),
        )

    def set_gains(self, gains: np.ndarray) -> None:
        gains = np.asarray(gains, dtype=float)
        if gains.shape != (self.n,):
            raise SimulationError("gain vector must have one entry per neuron")
        if np.any(gains <= 0):
            raise SimulationError("gains must be positive")
        self.gain[:] = gains
        self._derived = None

    def attach_plastic(self, indptr, post, weights) -> None:
        """Install the plastic synapse CSR (shared, updated in place)."""
        self.pl_indptr = np.asarray(indptr, dtype=np.int64)
        self.pl_post = np.asarray(post, dtype=np.int32)
        self.pl_w = np.asarray(weights, dtype=np.float64)

    # -- state management ----------------------------------------------------

    def reset_state(self) -> None:
        """Return all dynamic state to rest (keeps topology, drives, clock)."""
        self.v[:] = self.v_rest
        self.adapt[:] = 0.0
        self.refrac_left[:] = 0
        self.traces[:] = 0.0
        self.in_traces[:] = 0.0
        self.plastic_trace[:] = 0.0
        self.pending[:] = False

    def snapshot(self) -> dict:
        """Copy of everything mutated by simulation (for save/restore)."""
        return {
            "v": self.v.copy(), "adapt": self.adapt.copy(),
            "refrac_left": self.refrac_left.copy(), "traces": self.traces.copy(),
            "in_traces": self.in_traces.copy(),
            "plastic_trace": self.plastic_trace.copy(),
            "pending": self.pending.copy(), "step_idx": self.step_idx,
            "drive_rate": self.drive_rate.copy(),
            "drive_pattern": self.drive_pattern.copy(),
            "drive_key": self.drive_key.copy(),
            "drive_seed": self.drive_seed.copy(),
            "pl_w": self.pl_w.copy(),
        }

    def restore(self, snap: dict) -> None:
        self.v[:] = snap["v"]
        self.adapt[:] = snap["adapt"]
        self.refrac_left[:] = snap["refrac_left"]
        self.traces[:] = snap["traces"]
        self.in_traces[:] = snap["in_traces"]
        self.plastic_trace[:] = snap["plastic_trace"]
        self.pending[:] = snap["pending"]
        self.step_idx = snap["step_idx"]
        self.drive_rate[:] = snap["drive_rate"]
        self.drive_pattern[:] = snap["drive_pattern"]
        self.drive_key[:] = snap["drive_key"]
        self.drive_seed[:] = snap["drive_seed"]
        self.pl_w[:] = snap["pl_w"]
        self._derived = None

    # -- simulation ----------------------------------------------------------

    def _compile_connections(self) -> None:
        order = sorted(self._conn.items())
        m = len(order)
        self._conn_post = np.zeros(m, dtype=np.int32)
        self._conn_cls = np.zeros(m, dtype=np.int8)
        counts = np.zeros(self.n, dtype=np.int64)
        for j, ((pre, post), cls) in enumerate(order):
            self._conn_post[j] = post
            self._conn_cls[j] = cls
            counts[pre] += 1
        self._conn_indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=self._conn_indptr[1:])
        self._conn_dirty = False

    def _derive(self, dt_ms: float):
        if self._derived is not None and self._derived_dt == dt_ms:
            return self._derived
        if dt_ms <= 0:
            raise SimulationError("dt must be positive")
        if dt_ms > float(np.min(self.tau_m)) / 10.0:
            raise SimulationError("dt must not exceed min(membrane_tau)/10")
        dt_us = int(round(dt_ms * 1000.0))
        if dt_us < 1 or abs(dt_us - dt_ms * 1000.0) > 1e-9:
            raise SimulationError("dt must be a whole number of microseconds")
        dt_s = dt_ms * 1e-3
        d = {
            "dt_us": np.int64(dt_us),
            "dt_s": dt_s,
            "mem_coef": dt_ms / self.tau_m,
            "gdt": self.gain * dt_s,
            "adapt_decay": np.exp(-dt_ms / self.adapt_tau),
            "refrac_steps": np.round(self.refractory / dt_ms).astype(np.int32),
            "class_decay": np.exp(-dt_ms / self.class_tau),
            "in_decay": np.exp(-dt_ms / self.input_tau),
            "plastic_decay": float(np.exp(-dt_ms / self.plastic_tau)),
            "drive_pexp": np.exp(-self.drive_rate * dt_s),
        }
        self._derived = d
        self._derived_dt = dt_ms
        return d

    def _run_chunk(self, n_steps: int, dt_ms: float, probe_idx: np.ndarray,
                   probe_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self._derive(dt_ms)
        if self._conn_dirty:
            self._compile_connections()
        min_refrac = int(d["refrac_steps"].min())
        cap = self.n * (n_steps // max(min_refrac, 1) + 2) if min_refrac > 0 \
            else self.n * n_steps
        ev_id = np.zeros(cap, dtype=np.int32)
        ev_ts = np.zeros(cap, dtype=np.int64)
        n_ev = _kernels.run_steps(
            n_steps, self.step_idx, d["dt_us"], d["dt_s"],
            d["mem_coef"], d["gdt"], self.v_rest, self.threshold, self.v_reset,
            self.adapt_inc, d["adapt_decay"], d["refrac_steps"],
            self.class_eff, d["class_decay"], self.input_efficacy, d["in_decay"],
            d["plastic_decay"],
            self._conn_indptr, self._conn_post, self._conn_cls,
            self.pl_indptr, self.pl_post, self.pl_w,
            self.drive_rate, self.drive_pattern, self.drive_key,
            d["drive_pexp"],
            self.v, self.adapt, self.refrac_left, self.traces, self.in_traces,
            self.plastic_trace, self.pending,
            ev_id, ev_ts, probe_idx, probe_v,
        )
        self.step_idx += n_steps
        return ev_id[:n_ev], ev_ts[:n_ev]

    def step(self, dt_ms: float | None = None) -> list[Event]:
        """Advance one timestep; returns the events emitted during it."""
        dt = self.dt_ms if dt_ms is None else float(dt_ms)
        probe_v = np.zeros((1, 0))
        ids, ts = self._run_chunk(1, dt, np.empty(0, dtype=np.int64), probe_v)
        return [Event(int(i), int(t)) for i, t in zip(ids, ts)]

    def run(self, duration_ms: float, probes: Iterable[int] = (),
            chunk_steps: int = 2000):
        """Simulate for a duration; returns (EventLog, probe matrix).

        The probe matrix holds the membrane potential of each probed neuron
        at the end of every step, shape (n_steps, len(probes)).
        """
        if duration_ms <= 0:
            raise SimulationError("duration must be positive")
        n_steps = int(round(duration_ms / self.dt_ms))
        if n_steps < 1:
            raise SimulationError("duration shorter than one timestep")
        probe_idx = np.array(sorted(self._check_index(p) for p in probes),
                             dtype=np.int64)
        probe_v = np.zeros((n_steps, probe_idx.size))
        log = EventLog()
        done = 0
        while done < n_steps:
            take = min(chunk_steps, n_steps - done)
            ids, ts = self._run_chunk(take, self.dt_ms, probe_idx,
                                      probe_v[done:done + take])
            log.append_batch(ids, ts)
            done += take
        return log, probe_v

    @property
    def now_ms(self) -> float:
        return self.step_idx * self.dt_ms

    @property
    def now_us(self) -> int:
        return self.step_idx * int(round(self.dt_ms * 1000.0))


def build_network(n_neurons: int = 256, default_params: NeuronParams | None = None,
                  weight_classes: Sequence[WeightClass] | None = None,
                  dt_ms: float = 0.1) -> Network:
    """Construct an empty device: no connections, no drives, all at rest."""
    if default_params is None:
        default_params = NeuronParams()
    if weight_classes is None:
        weight_classes = default_weight_classes()
    return Network(n_neurons, default_params, weight_classes, dt_ms=dt_ms)


def spike_rate(log: EventLog, neurons: Iterable[int], window_ms: float,
               at_ms: float) -> float:
    """Population rate in Hz: events from `neurons` in (at-window, at] / window."""
    neurons = set(int(i) for i in neurons)
    if not neurons:
        raise SimulationError("neuron set must not be empty")
    if window_ms <= 0:
        raise SimulationError("window must be positive")
    if at_ms < window_ms:
        raise SimulationError("window must fit inside the log (at >= window)")
    ids, ts = log.neuron_ids, log.timestamps
    if ids.size == 0:
        return 0.0
    lo = int(round((at_ms - window_ms) * 1000.0))
    hi = int(round(at_ms * 1000.0))
    in_win = (ts > lo) & (ts <= hi)
    if not in_win.any():
        return 0.0
    mask = np.isin(ids[in_win], np.fromiter(neurons, dtype=np.int32))
    count = int(mask.sum())
    return count / (window_ms * 1e-3)


def window_counts(log: EventLog, n_neurons: int, start_ms: float,
                  end_ms: float) -> np.ndarray:
    """Per-neuron spike counts over the window (start, end] in ms."""
    ids, ts = log.neuron_ids, log.timestamps
    lo = int(round(start_ms * 1000.0))
    hi = int(round(end_ms * 1000.0))
    sel = (ts > lo) & (ts <= hi)
    return np.bincount(ids[sel], minlength=n_neurons)
