from imads.sim.core import ConfigError, SimClock, SimConfig, SimNetwork
from imads.sim.scenario import inject_partition, load_scenario, run_scenario

__all__ = [
    "ConfigError",
    "SimClock",
    "SimConfig",
    "SimNetwork",
    "inject_partition",
    "load_scenario",
    "run_scenario",
]
