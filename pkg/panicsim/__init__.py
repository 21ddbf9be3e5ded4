from .api import save_run, simulate, sweep, with_overrides
from .engine import MetricsReport, SimRun, World, compute_metrics, run, step
from .exceptions import (
    BlockedError,
    NonFiniteForce,
    PanicSimError,
    ParseError,
    PlacementError,
    SemanticError,
    UnreachableError,
    ValidationFailed,
)
from .model import (
    PRESETS,
    AgentState,
    Hazard,
    ModelParams,
    Rect,
    ScenarioSpec,
    Segment,
    SimFrame,
    SimSettings,
    SpawnGroup,
    ValidationReport,
    spawn_agents,
    validate_scenario,
)
from .scenario_io import load_scenario, parse_scenario, serialize_scenario

__all__ = [
    "AgentState",
    "BlockedError",
    "Hazard",
    "MetricsReport",
    "ModelParams",
    "NonFiniteForce",
    "PRESETS",
    "PanicSimError",
    "ParseError",
    "PlacementError",
    "Rect",
    "ScenarioSpec",
    "Segment",
    "SemanticError",
    "SimFrame",
    "SimRun",
    "SimSettings",
    "SpawnGroup",
    "UnreachableError",
    "ValidationFailed",
    "ValidationReport",
    "World",
    "compute_metrics",
    "load_scenario",
    "parse_scenario",
    "run",
    "save_run",
    "serialize_scenario",
    "simulate",
    "spawn_agents",
    "step",
    "sweep",
    "validate_scenario",
    "with_overrides",
]
