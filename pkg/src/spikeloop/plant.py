"""Simulated wheel-motor plant and noisy gyro.

First-order rotational response to a non-negative command, sampled by a gyro
at a fixed cadence with additive white Gaussian noise. A hold perturbation
clamps the true velocity to zero without touching the command path, standing
in for physically blocking the wheel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SimulationError

# The command scale is dimensionless 0..5 (one unit per command level); the
# gain maps command units to gyro units so that command 2 settles at ~1012.
DEFAULT_GAIN = 506.0
DEFAULT_TAU_S = 0.3
DEFAULT_IMU_NOISE_STD = 84.0
DEFAULT_IMU_RATE_HZ = 200.0


@dataclass
class PlantParams:
    gain: float = DEFAULT_GAIN            # gyro units per command unit
    tau_s: float = DEFAULT_TAU_S          # motor time constant, seconds
    imu_noise_std: float = DEFAULT_IMU_NOISE_STD
    imu_rate_hz: float = DEFAULT_IMU_RATE_HZ

    def validate(self) -> None:
        if self.gain <= 0 or self.tau_s <= 0:
            raise SimulationError("gain and tau must be positive")
        if self.imu_noise_std < 0:
            raise SimulationError("imu_noise_std must be >= 0")
        if self.imu_rate_hz <= 0:
            raise SimulationError("imu_rate_hz must be positive")


@dataclass
class PlantState:
    omega: float = 0.0   # true rotational velocity, gyro units
    u: float = 0.0       # last applied command
    held: bool = False   # hold perturbation engaged


def plant_step(state: PlantState, params: PlantParams, u: float,
               dt_s: float) -> PlantState:
    """Advance the first-order plant by dt under command u (exact update)."""
    if dt_s <= 0:
        raise SimulationError("dt must be positive")
    if u < 0:
        raise SimulationError("command must be >= 0")
    state.u = float(u)
    if state.held:
        state.omega = 0.0
        return state
    target = params.gain * u
    alpha = np.exp(-dt_s / params.tau_s)
    state.omega = target + (state.omega - target) * alpha
    return state


def imu_sample(state: PlantState, params: PlantParams,
               rng: np.random.Generator) -> float:
    """One gyro reading: true velocity plus white Gaussian noise."""
    if params.imu_noise_std == 0:
        return state.omega
    return state.omega + rng.normal(0.0, params.imu_noise_std)
