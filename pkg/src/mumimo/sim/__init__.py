"""Multi-cell slot simulator, its configuration and reporting."""

from .channels import ChannelStream, Geometry, build_geometry, generate_channels
from .config import ConfigError, SimConfig, from_mapping, load_config, to_mapping
from .engine import (
    SimulationError,
    SlotMetrics,
    available_schemes,
    ici_covariance,
    resolve_schemes,
    run_drop,
)
from .report import Report, aggregate
from .runner import simulate, write_outputs

__all__ = [
    "ChannelStream", "ConfigError", "Geometry", "Report", "SimConfig", "SimulationError",
    "SlotMetrics", "aggregate", "available_schemes", "build_geometry", "from_mapping",
    "generate_channels", "ici_covariance", "load_config", "resolve_schemes", "run_drop",
    "simulate", "to_mapping", "write_outputs",
]
