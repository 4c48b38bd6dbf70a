"""Cell-level simulator of TCP bulk transfers over the ATM ABR service, with
explicit-rate switch control and deterministic ON-OFF background traffic."""

__version__ = "0.1.0"

from .config import ScenarioConfig, parse_scenario, load_scenario, ConfigError
from .harness import RunMetrics, run_scenario, reproduce_table, detect_divergence
from .network import Simulation

__all__ = [
    "__version__",
    "ScenarioConfig",
    "parse_scenario",
    "load_scenario",
    "ConfigError",
    "RunMetrics",
    "run_scenario",
    "reproduce_table",
    "detect_divergence",
    "Simulation",
]
