"""Conflict-zone coordination of connected automated vehicles on looped routes."""
from .engine import RunResult, ScenarioConfig, run
from .config import load_scenario

__version__ = "0.1.0"

__all__ = ["RunResult", "ScenarioConfig", "load_scenario", "run", "__version__"]
