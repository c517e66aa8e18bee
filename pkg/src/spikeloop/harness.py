"""Interface layer and experiment driver.

The software side of the loop: the gyro is sampled on a fixed cadence and
binned into 5 ranges; the matching feedback neuron is stimulated at 800 Hz;
the rate-code motor population is read out in 100 ms windows and the motor
command is set proportionally to that window rate. Learning updates run on
the same window grid, gated by the zero-difference readout. A kick rule
re-seeds the efferent-copy loop whenever the space-code population has gone
silent while a nonzero difference is being read out (cold start and recovery
after relay collapses).

Experiments: the staircase sweep, the stop-and-go perturbation, and the
learn-then-probe run over all five commands. Every experiment writes
raster.csv, imu.csv, summary.json, the exact config used, the wiring
document, and (after learning) weights.json.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SimConfig
from .controller import Controller, ControllerLayout, build_controller
from .core import EventLog, Network, SimulationError, build_network, \
    default_weight_classes, spike_rate, window_counts
from .mismatch import MismatchModel, apply_mismatch, characterize, select_similar
from .plant import PlantParams, PlantState, imu_sample, plant_step
from .plasticity import plasticity_update


@dataclass(frozen=True)
class BinMap:
    """Four ascending thresholds partitioning measurements into bins 1..5."""

    thresholds: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        if len(t) != 4 or any(t[i] >= t[i + 1] for i in range(3)):
            raise SimulationError("bin map needs 4 strictly ascending thresholds")
        object.__setattr__(self, "thresholds", t)


def bin_imu(measurement: float, binmap: BinMap) -> int:
    """Bin index 1..5; intervals are lower-inclusive (measurement == threshold
    k falls in bin k+1), everything below the first threshold is bin 1."""
    return int(np.searchsorted(binmap.thresholds, measurement, side="right")) + 1


def build_rig(config: SimConfig):
    """Device + mismatch + characterization + selection + wiring, from one seed."""
    net = build_network(
        config.n_neurons, config.neuron_params(),
        default_weight_classes(scale=config.ladder_scale), dt_ms=config.dt_ms)
    apply_mismatch(net, MismatchModel(config.mismatch_cv, seed=config.seed))
    profile = characterize(net, duration_ms=config.characterize_s * 1000.0)
    chosen = select_similar(profile, config.select_k, config.select_tolerance_hz)
    layout = ControllerLayout.from_neurons(chosen)
    ctl = build_controller(net, layout, config.controller)
    return net, layout, ctl, profile


def set_goal(controller: Controller, g: int | None, learning: bool = False) -> None:
    """Command goal level g (1..5) by inhibiting its goal neuron."""
    controller.set_goal(g, learning=learning)


def calibrate_motor_scale(ctl: Controller, u_max: float = 5.0,
                          window_ms: float = 100.0) -> float:
    """Proportionality constant: full fan-out window rate maps to u_max.

    Probes a synthetically converged loop (goal = feedback = 5) and measures
    the steady rate-code population rate; network state is restored.
    """
    net, lay = ctl.network, ctl.layout
    snap = net.snapshot()
    step0 = net.step_idx
    try:
        ctl.set_goal(5)
        ctl.drive_feedback(5)
        ctl.kick_result("plus", 5)
        net.run(300.0)
        ctl.kick_result("plus", None)
        log, _ = net.run(1700.0)
        rates = [spike_rate(log, lay.mr, window_ms, t)
                 for t in np.arange(800.0, 1700.0 + 1e-9, window_ms)]
        full_rate = float(np.mean(rates))
    finally:
        net.restore(snap)
        net.step_idx = step0
    if full_rate <= 0:
        raise SimulationError("motor calibration probe produced no rate-code spikes")
    return u_max / full_rate


@dataclass
class ImuRow:
    t_ms: float
    omega_true: float
    omega_measured: float
    bin: int
    u: float


class ClosedLoop:
    """Network, plant and interface advanced in lockstep.

    One tick = one gyro period (5 ms): advance the network, step the plant
    under the current command, sample and re-bin the gyro, retarget the
    feedback drive. Every readout window (100 ms): set the command from the
    rate-code window rate, apply the gated learning update, run the kick rule.
    """

    def __init__(self, ctl: Controller, config: SimConfig,
                 learning_updates: bool = True):
        self.ctl = ctl
        self.net = ctl.network
        self.config = config
        self.plant_params = config.plant
        self.plant = PlantState()
        self.binmap = BinMap(tuple(config.bin_thresholds()))
        self.rng = np.random.default_rng(config.seed + 1)
        self.c_motor = calibrate_motor_scale(ctl, config.u_max, config.window_ms)
        self.learning_updates = learning_updates
        self.feedback_enabled = True
        self.u = 0.0
        self.events = EventLog()
        self.imu_rows: list[ImuRow] = []
        self.gate_windows: list[tuple[float, bool]] = []
        self.window_u: list[tuple[float, float]] = []
        self.ticks_per_window = int(round(config.window_ms / config.imu_period_ms))
        self._tick = 0
        self._window_start_ms = self.net.now_ms
        self._current_bin: int | None = None
        self._kick_ttl = 0

    @property
    def now_ms(self) -> float:
        return self.net.now_ms

    def set_feedback_enabled(self, on: bool) -> None:
        self.feedback_enabled = on
        if not on:
            self.ctl.drive_feedback(None)
            self._current_bin = None

    def _tick_once(self) -> None:
        cfg = self.config
        log, _ = self.net.run(cfg.imu_period_ms)
        self.events.extend(log)

        plant_step(self.plant, self.plant_params, self.u,
                   cfg.imu_period_ms * 1e-3)
        measured = imu_sample(self.plant, self.plant_params, self.rng)
        b = bin_imu(measured, self.binmap)
        if self.feedback_enabled and b != self._current_bin:
            self.ctl.drive_feedback(b)
            self._current_bin = b
        self.imu_rows.append(ImuRow(self.net.now_ms, self.plant.omega,
                                    measured, b, self.u))
        self._tick += 1
        if self._tick % self.ticks_per_window == 0:
            self._end_window()

    def _end_window(self) -> None:
        cfg = self.config
        lay = self.ctl.layout
        t1 = self.net.now_ms
        t0 = t1 - cfg.window_ms
        counts = window_counts(self.events, self.net.n, t0, t1)
        mr_rate = counts[lay.mr].sum() / (cfg.window_ms * 1e-3)
        self.u = self.c_motor * mr_rate
        self.window_u.append((t1, self.u))

        gate = self.ctl.gate_from_counts(counts)
        self.gate_windows.append((t1, gate.open))
        if self.learning_updates:
            plasticity_update(self.ctl.plastic, counts, gate)

        self._kick_rule(counts)

    def _kick_rule(self, counts: np.ndarray) -> None:
        """Re-seed the efferent copy when the space code is silent but a
        nonzero difference readout is active. Once triggered, the kick stays
        up for a few windows so the relay chain has runway to take over."""
        lay = self.ctl.layout
        if self._kick_ttl > 0:
            self._kick_ttl -= 1
            if self._kick_ttl == 0:
                self.ctl.kick_result("plus", None)
            return
        if self.ctl.goal is None or counts[lay.ms].sum() > 0:
            self.ctl.kick_result("plus", None)
            return
        plus = counts[lay.d_plus]
        minus = counts[lay.d_minus]
        if plus[1:].max(initial=0) >= minus.max(initial=0):
            d = int(np.argmax(plus[1:])) + 1 if plus[1:].max(initial=0) > 0 else 0
            if d > 0:
                self.ctl.kick_result("plus", d)
                self._kick_ttl = self.ctl.config.kick_windows
                return
        elif minus.max(initial=0) > 0:
            self.ctl.kick_result("minus", 1)
            self._kick_ttl = self.ctl.config.kick_windows
            return
        self.ctl.kick_result("plus", None)

    def run_s(self, seconds: float) -> None:
        for _ in range(int(round(seconds * 1000.0 / self.config.imu_period_ms))):
            self._tick_once()

    def run_until_settled(self, goal: int, budget_s: float,
                          hold_s: float) -> float | None:
        """Advance until the bin has equalled the goal for hold_s; returns the
        settle instant (s, relative to call) or None on budget exhaustion."""
        cfg = self.config
        tick_s = cfg.imu_period_ms * 1e-3
        need = int(round(hold_s / tick_s))
        run_of = 0
        start_ms = self.now_ms
        max_ticks = int(round(budget_s / tick_s)) + need
        for _ in range(max_ticks):
            self._tick_once()
            row = self.imu_rows[-1]
            run_of = run_of + 1 if row.bin == goal else 0
            if run_of >= need:
                settle_ms = (self.now_ms - start_ms) - hold_s * 1000.0
                return max(0.0, settle_ms) * 1e-3
            if (self.now_ms - start_ms) * 1e-3 >= budget_s + hold_s:
                break
        return None

    # -- output files ---------------------------------------------------------

    def write_imu_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_ms", "omega_true", "omega_measured", "bin", "u"])
            for r in self.imu_rows:
                w.writerow([f"{r.t_ms:.1f}", f"{r.omega_true:.3f}",
                            f"{r.omega_measured:.3f}", r.bin, f"{r.u:.6f}"])

    def write_raster_csv(self, path) -> None:
        self.events.to_csv(path)


def _write_summary(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_weights(path, plastic) -> None:
    with open(path, "w") as fh:
        json.dump(plastic.triplets(), fh, indent=2)
        fh.write("\n")


def _finish(out: Path, loop: ClosedLoop, config: SimConfig, summary: dict,
            weights: bool = False) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    loop.write_raster_csv(out / "raster.csv")
    loop.write_imu_csv(out / "imu.csv")
    config.to_json(out / "config.json")
    with open(out / "wiring.json", "w") as fh:
        json.dump(loop.ctl.wiring_document(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if weights:
        _write_weights(out / "weights.json", loop.ctl.plastic)
    _write_summary(out / "summary.json", summary)
    return summary


def run_staircase(config: SimConfig) -> dict:
    """Goals 1..5..1, one convergence phase each; settle times per step."""
    exp = config.experiment
    exp.validate()
    out = Path(exp.out_dir)
    net, layout, ctl, _ = build_rig(config)
    loop = ClosedLoop(ctl, config, learning_updates=False)

    steps = []
    prev_goal = 0
    for goal in exp.goal_schedule:
        goal = int(goal)
        set_goal(ctl, goal)
        phase_start = loop.now_ms
        settle = loop.run_until_settled(goal, exp.phase_budget_s,
                                        exp.settle_hold_s)
        stats_rows = [r for r in loop.imu_rows
                      if r.t_ms > loop.now_ms - 1000.0]
        steps.append({
            "goal": goal,
            "direction": "up" if goal > prev_goal else "down",
            "phase_start_ms": phase_start,
            "settle_s": settle,
            "converged": settle is not None,
            "steady_omega_mean": float(np.mean([r.omega_measured for r in stats_rows])),
            "steady_omega_std": float(np.std([r.omega_measured for r in stats_rows])),
        })
        prev_goal = goal

    rising = [s["settle_s"] for s in steps if s["direction"] == "up" and s["converged"]]
    falling = [s["settle_s"] for s in steps if s["direction"] == "down" and s["converged"]]
    summary = {
        "experiment": "staircase",
        "seed": config.seed,
        "steps": steps,
        "n_converged": sum(s["converged"] for s in steps),
        "mean_rising_settle_s": float(np.mean(rising)) if rising else None,
        "mean_falling_settle_s": float(np.mean(falling)) if falling else None,
    }
    return _finish(out, loop, config, summary)


def run_stop_and_go(config: SimConfig) -> dict:
    """Converge, hold the plant for hold_s, release, re-converge."""
    exp = config.experiment
    exp.validate()
    out = Path(exp.out_dir)
    net, layout, ctl, _ = build_rig(config)
    loop = ClosedLoop(ctl, config, learning_updates=True)

    goal = int(exp.goal)
    set_goal(ctl, goal, learning=True)
    settle = loop.run_until_settled(goal, exp.phase_budget_s, exp.settle_hold_s)

    pre_start = loop.now_ms
    loop.run_s(2.0)
    pre_rate = _mean_window_rate(loop, pre_start, loop.now_ms)

    hold_start = loop.now_ms
    loop.plant.held = True
    loop.run_s(exp.hold_s)
    hold_rate = _mean_window_rate(loop, hold_start, loop.now_ms)
    hold_end = loop.now_ms

    loop.plant.held = False
    resettle = loop.run_until_settled(goal, exp.phase_budget_s,
                                      exp.settle_hold_s)
    post_start = loop.now_ms
    loop.run_s(2.0)
    post_rate = _mean_window_rate(loop, post_start, loop.now_ms)

    summary = {
        "experiment": "stop_and_go",
        "seed": config.seed,
        "goal": goal,
        "initial_settle_s": settle,
        "hold_interval_ms": [hold_start, hold_end],
        "pre_hold_mr_rate_hz": pre_rate,
        "hold_mr_rate_hz": hold_rate,
        "post_release_mr_rate_hz": post_rate,
        "reconverge_s": resettle,
        "ramped_up_during_hold": hold_rate > pre_rate,
    }
    return _finish(out, loop, config, summary, weights=True)


def _mean_window_rate(loop: ClosedLoop, t0_ms: float, t1_ms: float) -> float:
    lay = loop.ctl.layout
    rates = [spike_rate(loop.events, lay.mr, loop.config.window_ms, t)
             for t in np.arange(t0_ms + loop.config.window_ms, t1_ms + 1e-9,
                                loop.config.window_ms)]
    return float(np.mean(rates)) if rates else 0.0


def run_learn_all(config: SimConfig) -> dict:
    """Learn all five commands feedback-first, probing each feedforward path."""
    exp = config.experiment
    exp.validate()
    out = Path(exp.out_dir)
    net, layout, ctl, _ = build_rig(config)
    loop = ClosedLoop(ctl, config, learning_updates=True)

    commands = []
    for goal in range(1, 6):
        set_goal(ctl, goal, learning=True)
        settle = loop.run_until_settled(goal, exp.phase_budget_s,
                                        exp.settle_hold_s)
        learn_start = loop.now_ms
        loop.run_s(exp.learn_s)
        gate_open = sum(1 for t, g in loop.gate_windows
                        if g and t > learn_start)

        # probe: stimulate nothing but the learning command
        set_goal(ctl, None)
        ctl.suspend_goal_tonics(True)
        loop.set_feedback_enabled(False)
        ctl.block_feedback_path(True)
        ctl.kick_result("plus", None)
        loop.run_s(exp.rest_s)

        probe_start = loop.now_ms
        ctl.drive_learn_cmd(goal)
        reach_s = None
        ticks = int(round(exp.probe_s * 1000.0 / config.imu_period_ms))
        for _ in range(ticks):
            loop._tick_once()
            if reach_s is None and loop.imu_rows[-1].bin == goal:
                reach_s = (loop.now_ms - probe_start) * 1e-3
        probe_rate = _mean_window_rate(loop, probe_start + 1000.0, loop.now_ms)
        probe_end = loop.now_ms

        ctl.drive_learn_cmd(None)
        ctl.block_feedback_path(False)
        ctl.suspend_goal_tonics(False)
        loop.set_feedback_enabled(True)
        loop.run_s(exp.rest_s)

        commands.append({
            "goal": goal,
            "settle_s": settle,
            "gate_open_windows": gate_open,
            "probe_interval_ms": [probe_start, probe_end],
            "probe_reached_bin": reach_s is not None,
            "probe_time_to_bin_s": reach_s,
            "probe_mr_rate_hz": probe_rate,
        })

    summary = {
        "experiment": "learn_all",
        "seed": config.seed,
        "commands": commands,
        "all_probes_reached": all(c["probe_reached_bin"] for c in commands),
    }
    return _finish(out, loop, config, summary, weights=True)


def run_characterize(config: SimConfig) -> dict:
    """Characterization sweep: per-neuron rate profile CSVs."""
    out = Path(config.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = build_network(
        config.n_neurons, config.neuron_params(),
        default_weight_classes(scale=config.ladder_scale), dt_ms=config.dt_ms)
    apply_mismatch(net, MismatchModel(config.mismatch_cv, seed=config.seed))
    profile = characterize(net, duration_ms=config.characterize_s * 1000.0)
    profile.to_csv(out / "rate_profile.csv")
    profile.to_csv(out / "rate_profile_sorted.csv", ordered=True)
    config.to_json(out / "config.json")
    summary = {
        "experiment": "characterize",
        "seed": config.seed,
        "stimulus_rate_hz": profile.stimulus_rate,
        "mean_rate_hz": profile.mean,
        "std_rate_hz": profile.std,
    }
    _write_summary(out / "summary.json", summary)
    return summary


EXPERIMENTS = {
    "staircase": run_staircase,
    "stop_and_go": run_stop_and_go,
    "learn_all": run_learn_all,
    "characterize": run_characterize,
}


def run_experiment(config: SimConfig) -> dict:
    config.experiment.validate()
    return EXPERIMENTS[config.experiment.kind](config)
