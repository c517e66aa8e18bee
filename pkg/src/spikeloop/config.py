"""One JSON document configures everything: device, mismatch, controller,
plant, binning and the experiment schedule. Defaults reproduce the shipped
calibration; any field can be overridden from a config file, and the CLI seed
flag overrides the config seed."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .controller import ControllerConfig
from .core import LADDER_SCALE, NeuronParams
from .mismatch import DEFAULT_MISMATCH_CV
from .plant import PlantParams

STAIRCASE_SCHEDULE = (1, 2, 3, 4, 5, 4, 3, 2, 1)


@dataclass
class ExperimentConfig:
    kind: str = "staircase"           # staircase | stop_and_go | learn_all | characterize
    seed: int = 42
    out_dir: str = "out"
    goal_schedule: tuple = STAIRCASE_SCHEDULE
    phase_budget_s: float = 12.0      # per-goal convergence budget
    settle_hold_s: float = 2.0        # bin must match the goal this long
    hold_s: float = 8.0               # stop-and-go perturbation length
    goal: int = 2                     # stop-and-go goal level
    learn_s: float = 4.0              # learning time after convergence
    probe_s: float = 5.0              # feedforward probe length
    rest_s: float = 2.0              # coast-down between phases
    measure_s: float = 10.0           # steady-state measurement stretch

    def validate(self) -> None:
        kinds = ("staircase", "stop_and_go", "learn_all", "characterize")
        if self.kind not in kinds:
            raise ValueError(f"experiment kind must be one of {kinds}")
        for g in self.goal_schedule:
            if not 1 <= int(g) <= 5:
                raise ValueError("goal levels must be in 1..5")
        for name in ("phase_budget_s", "settle_hold_s", "hold_s", "learn_s",
                     "probe_s", "rest_s", "measure_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SimConfig:
    """Full simulation document (device + controller + plant + experiment)."""

    seed: int = 42
    n_neurons: int = 256
    dt_ms: float = 0.1
    ladder_scale: float = LADDER_SCALE
    mismatch_cv: float = DEFAULT_MISMATCH_CV
    neuron: dict = field(default_factory=lambda: asdict(NeuronParams()))
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    u_max: float = 5.0
    imu_period_ms: float = 5.0
    window_ms: float = 100.0
    select_k: int = 95
    select_tolerance_hz: float = 12.0
    characterize_s: float = 5.0
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def bin_thresholds(self) -> list[float]:
        """Midpoints between adjacent steady-state velocities of commands 1..5."""
        return [self.plant.gain * (k + 0.5) for k in range(1, 5)]

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "controller" in d and isinstance(d["controller"], dict):
            base = ControllerConfig()
            merged = {f.name: d["controller"].get(f.name, getattr(base, f.name))
                      for f in fields(ControllerConfig)}
            d["controller"] = ControllerConfig(**merged)
        if "plant" in d and isinstance(d["plant"], dict):
            d["plant"] = PlantParams(**d["plant"])
        if "experiment" in d and isinstance(d["experiment"], dict):
            base_e = ExperimentConfig()
            merged = {f.name: d["experiment"].get(f.name, getattr(base_e, f.name))
                      for f in fields(ExperimentConfig)}
            if isinstance(merged.get("goal_schedule"), list):
                merged["goal_schedule"] = tuple(merged["goal_schedule"])
            d["experiment"] = ExperimentConfig(**merged)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        base = cls()
        merged = {name: d.get(name, getattr(base, name)) for name in known}
        return cls(**merged)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_seed(self, seed: int) -> "SimConfig":
        cfg = replace(self, seed=int(seed))
        cfg.experiment = replace(self.experiment, seed=int(seed))
        return cfg

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(**self.neuron)
