"""spikeloop: event-driven spiking-device emulation with a closed-loop speed controller."""

from ._kernels import get_backend
from .core import (
    Event,
    EventLog,
    Network,
    NeuronParams,
    SimulationError,
    WeightClass,
    build_network,
    default_weight_classes,
    spike_rate,
)

__version__ = "0.1.0"

__all__ = [
    "Event",
    "EventLog",
    "Network",
    "NeuronParams",
    "SimulationError",
    "WeightClass",
    "build_network",
    "default_weight_classes",
    "get_backend",
    "spike_rate",
    "__version__",
]
