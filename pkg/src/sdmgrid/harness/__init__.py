"""Scenario description, simulation engine, reselection round and experiments."""
from .dvsss import DvsssResult, discover_neighbors, run_dvsss
from .engine import PeriodMetrics, Simulation, SimulationError, Trace, jsc, metrics_csv, run_scenario
from .scenario import ConfigError, Scenario, load_scenario, node_jammer, scenario_from_dict

__all__ = [
    "ConfigError",
    "DvsssResult",
    "PeriodMetrics",
    "Scenario",
    "Simulation",
    "SimulationError",
    "Trace",
    "discover_neighbors",
    "jsc",
    "load_scenario",
    "metrics_csv",
    "node_jammer",
    "run_dvsss",
    "run_scenario",
    "scenario_from_dict",
]
