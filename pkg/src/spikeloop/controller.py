"""Wiring of the spiking speed controller on a simulated device.

Population roles (5 command levels throughout):

- goal:      task command, one neuron per level, all tonically active; the
             commanded level is externally inhibited (double inhibition)
- feedback:  measured-speed bins, the active bin is externally driven
- delta:     5x5 grid; row = feedback bin, column = goal level; a cell fires
             only when its column is released (goal inhibited) and its row is
             excited, so exactly one cell encodes the (goal, feedback) pair
- d_plus:    difference readout for goal >= feedback, magnitudes 0..4
             (index 0 is the zero-difference neuron)
- d_minus:   difference readout for goal < feedback, magnitudes 1..4
- transform: 5x5 grid; row = current command (efferent copy from ms),
             column = difference magnitude; diagonal readout computes
             command +/- difference with saturation at the range ends
- r_plus / r_minus: candidate next command, one neuron per level; the
             difference sign suppresses the opposite family
- ms:        space-coded motor command (winner-take-all via one auxiliary
             inhibitory neuron)
- mr:        rate-coded motor pool; command level k drives k of them
- learn_cmd: command copy for learning, inhibited by every nonzero
             difference readout so it fires only at convergence

All connections use the device's 8 weight classes; per-population threshold
and refractory overrides are the remaining tuning freedom and ship as
calibrated defaults in ControllerConfig.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .core import Network, SimulationError
from .plasticity import PlasticArray, enable_plastic

N_LEVELS = 5
LAYOUT_SIZE = 95


def _clamp_level(k: int) -> int:
    return max(1, min(N_LEVELS, k))


@dataclass
class ControllerLayout:
    """Assignment of device neurons to the controller populations.

    `delta[f][g]` is the grid cell for feedback bin f+1 and goal level g+1;
    `transform[m][d]` the cell for command level m+1 and difference d.
    """

    goal: list[int]
    feedback: list[int]
    delta: list[list[int]]
    d_plus: list[int]
    d_minus: list[int]
    transform: list[list[int]]
    r_plus: list[int]
    r_minus: list[int]
    ms: list[int]
    mr: list[int]
    wta: int
    learn_cmd: list[int]

    @classmethod
    def from_neurons(cls, neurons: Sequence[int]) -> "ControllerLayout":
        if len(neurons) < LAYOUT_SIZE:
            raise SimulationError(
                f"layout needs {LAYOUT_SIZE} neurons, got {len(neurons)}")
        it = iter(int(i) for i in neurons)

        def take(k):
            return [next(it) for _ in range(k)]

        return cls(
            goal=take(5), feedback=take(5),
            delta=[take(5) for _ in range(5)],
            d_plus=take(5), d_minus=take(4),
            transform=[take(5) for _ in range(5)],
            r_plus=take(5), r_minus=take(5),
            ms=take(5), mr=take(5), wta=take(1)[0], learn_cmd=take(5),
        )

    def populations(self) -> dict[str, list[int]]:
        return {
            "goal": list(self.goal), "feedback": list(self.feedback),
            "delta": [i for row in self.delta for i in row],
            "d_plus": list(self.d_plus), "d_minus": list(self.d_minus),
            "transform": [i for row in self.transform for i in row],
            "r_plus": list(self.r_plus), "r_minus": list(self.r_minus),
            "ms": list(self.ms), "mr": list(self.mr), "wta": [self.wta],
            "learn_cmd": list(self.learn_cmd),
        }

    def all_indices(self) -> list[int]:
        return [i for pop in self.populations().values() for i in pop]

    def readout_indices(self) -> list[int]:
        return list(self.d_plus) + list(self.d_minus)

    def validate(self) -> None:
        idx = self.all_indices()
        if len(idx) != LAYOUT_SIZE:
            raise SimulationError(f"layout must place exactly {LAYOUT_SIZE} neurons")
        if len(set(idx)) != len(idx):
            raise SimulationError("layout indices must be distinct")
        sizes = {"goal": 5, "feedback": 5, "d_plus": 5, "d_minus": 4,
                 "r_plus": 5, "r_minus": 5, "ms": 5, "mr": 5, "learn_cmd": 5,
                 "delta": 25, "transform": 25, "wta": 1}
        pops = self.populations()
        for name, want in sizes.items():
            if len(pops[name]) != want:
                raise SimulationError(f"population {name} must have {want} neurons")


@dataclass
class ControllerConfig:
    """Weight-class assignment per connection group plus tuned drive rates,
    thresholds and refractory overrides (see module docstring)."""

    group_classes: dict = field(default_factory=lambda: {
        "goal_inhibits_delta_column": "I4",
        "feedback_excites_delta_row": "E4",
        "delta_to_difference_readout": "E4",
        "difference_mutual_inhibition": "I4",
        "readout_excites_transform_column": "E3",
        "ms_excites_transform_row": "E3",
        "transform_to_r_plus": "E4",
        "transform_to_r_minus": "E4",
        "d_plus_blocks_r_minus": "I4",
        "d_minus_blocks_r_plus": "I4",
        "result_to_ms": "E4",
        "ms_to_wta": "E4",
        "wta_to_ms": "I2",
        "ms_lateral_inhibition": "I4",
        "ms_to_mr": "E4",
        "readout_blocks_learn_cmd": "I4",
    })

    goal_drive_hz: float = 800.0
    goal_inhibit_hz: float = 1600.0
    delta_background_hz: float = 55.0
    feedback_drive_hz: float = 800.0
    learn_drive_hz: float = 300.0
    kick_drive_hz: float = 300.0
    feedback_block_hz: float = 1600.0

    transform_threshold: float = 5.7
    transform_tau_m: float = 10.0
    transform_refractory_ms: float = 2.0
    result_threshold: float = 0.35
    ms_threshold: float = 0.20
    mr_threshold: float = 0.60
    relay_refractory_ms: float = 4.0
    readout_refractory_ms: float = 6.0
    ms_refractory_ms: float = 4.5
    mr_refractory_ms: float = 2.0
    kick_windows: int = 3

    plastic_w_init: float = 0.0
    plastic_w_max: float = 130.0
    gate_open_min: int = 3
    gate_quiet_max: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


# (group name, synapse count) for the static wiring audit
GROUP_FORMULAS = {
    "goal_inhibits_delta_column": 25,
    "feedback_excites_delta_row": 25,
    "delta_to_difference_readout": 25,
    "difference_mutual_inhibition": 40,
    "readout_excites_transform_column": 45,
    "ms_excites_transform_row": 25,
    "transform_to_r_plus": 25,
    "transform_to_r_minus": 25,
    "d_plus_blocks_r_minus": 25,
    "d_minus_blocks_r_plus": 20,
    "result_to_ms": 10,
    "ms_to_wta": 5,
    "wta_to_ms": 5,
    "ms_lateral_inhibition": 20,
    "ms_to_mr": 15,
    "readout_blocks_learn_cmd": 40,
}
PLASTIC_COUNT = 25


def _connect_group(network: Network, record: dict, group: str, cls: str,
                   pairs) -> None:
    n = 0
    for pre, post in pairs:
        network.connect(pre, post, cls)
        n += 1
    record[group] = n


def wire_delta_operator(network: Network, layout: ControllerLayout,
                        config: ControllerConfig, record: dict | None = None) -> Network:
    """Goal/feedback populations, the difference grid and its sign readout."""
    record = record if record is not None else {}
    cls = config.group_classes
    for g in layout.goal:
        network.set_drive(g, config.goal_drive_hz, "excitatory")
    for row in layout.delta:
        for cell in row:
            network.set_drive(cell, config.delta_background_hz, "excitatory")

    _connect_group(network, record, "goal_inhibits_delta_column",
                   cls["goal_inhibits_delta_column"],
                   ((layout.goal[g], layout.delta[f][g])
                    for g in range(5) for f in range(5)))
    _connect_group(network, record, "feedback_excites_delta_row",
                   cls["feedback_excites_delta_row"],
                   ((layout.feedback[f], layout.delta[f][g])
                    for f in range(5) for g in range(5)))

    def readout_for(f, g):
        d = g - f
        return layout.d_plus[d] if d >= 0 else layout.d_minus[-d - 1]

    _connect_group(network, record, "delta_to_difference_readout",
                   cls["delta_to_difference_readout"],
                   ((layout.delta[f][g], readout_for(f, g))
                    for f in range(5) for g in range(5)))
    _connect_group(network, record, "difference_mutual_inhibition",
                   cls["difference_mutual_inhibition"],
                   [(p, m) for p in layout.d_plus for m in layout.d_minus]
                   + [(m, p) for m in layout.d_minus for p in layout.d_plus])
    return network


def wire_transform_operator(network: Network, layout: ControllerLayout,
                            config: ControllerConfig, record: dict | None = None) -> Network:
    """Efferent-copy rows, difference columns, diagonal readout with clamping."""
    record = record if record is not None else {}
    cls = config.group_classes
    for row in layout.transform:
        for cell in row:
            network.set_params(cell, threshold=config.transform_threshold,
                               membrane_tau=config.transform_tau_m,
                               refractory_period=config.transform_refractory_ms)
    for r in layout.r_plus + layout.r_minus:
        network.set_params(r, threshold=config.result_threshold,
                           refractory_period=config.relay_refractory_ms)

    col_pairs = [(layout.d_plus[d], layout.transform[m][d])
                 for d in range(5) for m in range(5)]
    col_pairs += [(layout.d_minus[d - 1], layout.transform[m][d])
                  for d in range(1, 5) for m in range(5)]
    _connect_group(network, record, "readout_excites_transform_column",
                   cls["readout_excites_transform_column"], col_pairs)
    _connect_group(network, record, "ms_excites_transform_row",
                   cls["ms_excites_transform_row"],
                   ((layout.ms[m], layout.transform[m][d])
                    for m in range(5) for d in range(5)))
    _connect_group(network, record, "transform_to_r_plus",
                   cls["transform_to_r_plus"],
                   ((layout.transform[m][d],
                     layout.r_plus[_clamp_level(m + 1 + d) - 1])
                    for m in range(5) for d in range(5)))
    _connect_group(network, record, "transform_to_r_minus",
                   cls["transform_to_r_minus"],
                   ((layout.transform[m][d],
                     layout.r_minus[_clamp_level(m + 1 - d) - 1])
                    for m in range(5) for d in range(5)))
    _connect_group(network, record, "d_plus_blocks_r_minus",
                   cls["d_plus_blocks_r_minus"],
                   ((p, r) for p in layout.d_plus for r in layout.r_minus))
    _connect_group(network, record, "d_minus_blocks_r_plus",
                   cls["d_minus_blocks_r_plus"],
                   ((m, r) for m in layout.d_minus for r in layout.r_plus))
    return network


def wire_motor_populations(network: Network, layout: ControllerLayout,
                           config: ControllerConfig, record: dict | None = None) -> Network:
    """Result-to-space-code path, soft winner-take-all, rate-code fan-out."""
    record = record if record is not None else {}
    cls = config.group_classes
    for m in layout.ms:
        network.set_params(m, threshold=config.ms_threshold,
                           refractory_period=config.ms_refractory_ms)
    for r in layout.mr:
        network.set_params(r, threshold=config.mr_threshold,
                           refractory_period=config.mr_refractory_ms)

    _connect_group(network, record, "result_to_ms", cls["result_to_ms"],
                   [(layout.r_plus[k], layout.ms[k]) for k in range(5)]
                   + [(layout.r_minus[k], layout.ms[k]) for k in range(5)])
    _connect_group(network, record, "ms_to_wta", cls["ms_to_wta"],
                   ((m, layout.wta) for m in layout.ms))
    _connect_group(network, record, "wta_to_ms", cls["wta_to_ms"],
                   ((layout.wta, m) for m in layout.ms))
    _connect_group(network, record, "ms_lateral_inhibition",
                   cls["ms_lateral_inhibition"],
                   ((a, b) for a in layout.ms for b in layout.ms if a != b))
    _connect_group(network, record, "ms_to_mr", cls["ms_to_mr"],
                   ((layout.ms[k], layout.mr[j])
                    for k in range(5) for j in range(k + 1)))
    return network


def wire_learning_path(network: Network, layout: ControllerLayout,
                       config: ControllerConfig, record: dict | None = None) -> PlasticArray:
    """Difference-gated learning command population and the plastic array."""
    record = record if record is not None else {}
    cls = config.group_classes
    for lc in layout.learn_cmd:
        network.set_params(lc, refractory_period=config.relay_refractory_ms)
    nonzero = layout.d_plus[1:] + layout.d_minus
    _connect_group(network, record, "readout_blocks_learn_cmd",
                   cls["readout_blocks_learn_cmd"],
                   ((d, lc) for d in nonzero for lc in layout.learn_cmd))
    return enable_plastic(network, layout.learn_cmd, layout.mr,
                          w_init=config.plastic_w_init,
                          w_max=config.plastic_w_max)


def audit_wiring(record: dict, network: Network) -> dict:
    """Check every group's synapse count against its formula."""
    groups = {}
    ok = True
    for name, want in GROUP_FORMULAS.items():
        got = record.get(name, 0)
        groups[name] = {"expected": want, "actual": got, "ok": got == want}
        ok &= got == want
    total = sum(GROUP_FORMULAS.values())
    overlap_free = network.n_connections == total
    return {
        "groups": groups,
        "total_expected": total,
        "total_actual": network.n_connections,
        "plastic_synapses": int(network.pl_post.size),
        "plastic_expected": PLASTIC_COUNT,
        "ok": bool(ok and overlap_free
                   and network.pl_post.size == PLASTIC_COUNT),
    }


class Controller:
    """A wired controller: network + layout + config + plastic array."""

    def __init__(self, network: Network, layout: ControllerLayout,
                 config: ControllerConfig):
        layout.validate()
        self.network = network
        self.layout = layout
        self.config = config
        self.group_record: dict[str, int] = {}
        for pop in (layout.goal, layout.feedback,
                    [i for row in layout.delta for i in row], layout.learn_cmd):
            for i in pop:
                network.set_params(i, refractory_period=config.relay_refractory_ms)
        for i in layout.d_plus + layout.d_minus:
            network.set_params(i, refractory_period=config.readout_refractory_ms)
        wire_delta_operator(network, layout, config, self.group_record)
        wire_transform_operator(network, layout, config, self.group_record)
        wire_motor_populations(network, layout, config, self.group_record)
        self.plastic = wire_learning_path(network, layout, config,
                                          self.group_record)
        self.goal: int | None = None
        self._learning = False
        self._kicked: int | None = None

    # -- external drive management -------------------------------------------

    def set_goal(self, g: int | None, learning: bool = False) -> None:
        """Inhibit goal neuron g (1..5); None clears all goal commands."""
        net, lay, cfg = self.network, self.layout, self.config
        for i in lay.goal:
            net.set_drive(i, 0.0, "inhibitory")
        for i in lay.learn_cmd:
            net.set_drive(i, 0.0, "excitatory")
        self.goal = None
        self._learning = learning
        if g is None:
            return
        if not 1 <= g <= N_LEVELS:
            raise SimulationError(f"goal must be 1..{N_LEVELS}")
        net.set_drive(lay.goal[g - 1], cfg.goal_inhibit_hz, "inhibitory")
        if learning:
            net.set_drive(lay.learn_cmd[g - 1], cfg.learn_drive_hz, "excitatory")
        self.goal = g

    def drive_feedback(self, bin_index: int | None) -> None:
        """Stimulate the feedback neuron for the given bin (1..5), or none."""
        net, lay = self.network, self.layout
        for i in lay.feedback:
            net.set_drive(i, 0.0, "excitatory")
        if bin_index is not None:
            if not 1 <= bin_index <= N_LEVELS:
                raise SimulationError("feedback bin must be 1..5")
            net.set_drive(lay.feedback[bin_index - 1],
                          self.config.feedback_drive_hz, "excitatory")

    def block_feedback_path(self, on: bool) -> None:
        """Inhibit both result families (feedback controller off for probes)."""
        rate = self.config.feedback_block_hz if on else 0.0
        for i in self.layout.r_plus + self.layout.r_minus:
            self.network.set_drive(i, rate, "inhibitory")

    def suspend_goal_tonics(self, off: bool) -> None:
        """Withhold the standing goal drives (probe phases stimulate nothing)."""
        rate = 0.0 if off else self.config.goal_drive_hz
        for i in self.layout.goal:
            self.network.set_drive(i, rate, "excitatory")

    def drive_learn_cmd(self, g: int | None) -> None:
        for i in self.layout.learn_cmd:
            self.network.set_drive(i, 0.0, "excitatory")
        if g is not None:
            self.network.set_drive(self.layout.learn_cmd[g - 1],
                                   self.config.learn_drive_hz, "excitatory")

    def kick_result(self, side: str, level: int | None) -> None:
        """Briefly drive one result neuron to seed the efferent copy loop."""
        net, lay = self.network, self.layout
        for i in lay.r_plus + lay.r_minus:
            net.set_drive(i, 0.0, "excitatory")
        self._kicked = None
        if level is not None:
            pop = lay.r_plus if side == "plus" else lay.r_minus
            net.set_drive(pop[level - 1], self.config.kick_drive_hz, "excitatory")
            self._kicked = level

    # -- readout helpers -------------------------------------------------------

    def gate_from_counts(self, counts: np.ndarray):
        from .plasticity import LearningGate

        lay, cfg = self.layout, self.config
        return LearningGate.from_counts(
            counts, gating=lay.d_plus[0],
            quiet=lay.d_plus[1:] + lay.d_minus,
            open_threshold=cfg.gate_open_min, quiet_limit=cfg.gate_quiet_max)

    def audit(self) -> dict:
        return audit_wiring(self.group_record, self.network)

    def wiring_document(self) -> dict:
        """The device 'program': populations, groups, classes, audit."""
        return {
            "populations": self.layout.populations(),
            "connection_groups": {
                name: {"weight_class": self.config.group_classes[name],
                       "synapses": self.group_record.get(name, 0)}
                for name in GROUP_FORMULAS
            },
            "drives": {
                "goal_drive_hz": self.config.goal_drive_hz,
                "delta_background_hz": self.config.delta_background_hz,
                "feedback_drive_hz": self.config.feedback_drive_hz,
                "learn_drive_hz": self.config.learn_drive_hz,
            },
            "plastic": {
                "pairs": PLASTIC_COUNT,
                "w_max": self.config.plastic_w_max,
            },
            "audit": self.audit(),
        }


def build_controller(network: Network, layout: ControllerLayout,
                     config: ControllerConfig | None = None,
                     selected_neurons: Sequence[int] | None = None) -> Controller:
    """Wire the full architecture; `selected_neurons` overrides the layout
    placement (e.g. the output of the similar-neuron selection)."""
    if config is None:
        config = ControllerConfig()
    if selected_neurons is not None:
        layout = ControllerLayout.from_neurons(selected_neurons)
    ctl = Controller(network, layout, config)
    audit = ctl.audit()
    if not audit["ok"]:
        raise SimulationError(f"wiring audit failed: {audit}")
    return ctl
