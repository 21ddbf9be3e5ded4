import logging
import pathlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union
from warnings import warn

import pandas as pd

from .engine import SimRun, run
from .exceptions import ValidationFailed
from .model import ModelParams, ScenarioSpec, validate_scenario
from .scenario_io import (
    load_scenario,
    write_ledger,
    write_metrics,
    write_resolved_params,
    write_trajectory,
)

logger = logging.getLogger(__name__)

ScenarioLike = Union[ScenarioSpec, str, pathlib.Path]

RUN_FILES = {
    "trajectory": "trajectory.csv",
    "metrics": "metrics.csv",
    "ledger": "ledger.csv",
    "resolved_params": "resolved-params.txt",
}
SUMMARY_FILE = "sweep-summary.csv"


@dataclass
class _Overrides:
    seed: Optional[int] = None
    dt: Optional[float] = None
    max_time: Optional[float] = None
    output_every: Optional[int] = None

    def apply(self, spec: ScenarioSpec) -> ScenarioSpec:
        changed = {k: v for k, v in vars(self).items() if v is not None}
        if not changed:
            return spec
        return replace(spec, sim=replace(spec.sim, **changed))


def _as_spec(scenario: ScenarioLike) -> ScenarioSpec:
    if isinstance(scenario, ScenarioSpec):
        return scenario
    return load_scenario(scenario, validate=False)


def with_overrides(
    scenario: ScenarioLike,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
    max_time: Optional[float] = None,
    output_every: Optional[int] = None,
    params: Optional[Mapping[str, float]] = None,
) -> ScenarioSpec:
    """Scenario with run settings and model constants replaced.

    Args:
        scenario: Scenario or path of a scenario file.
        seed: Replaces ``sim.seed``.
        dt: Replaces ``sim.dt``.
        max_time: Replaces ``sim.max_time``.
        output_every: Replaces ``sim.output_every``.
        params: Model constants merged over the scenario's ``[params]`` entries.

    Returns:
        A new, unvalidated scenario.
    """
    spec = _Overrides(seed, dt, max_time, output_every).apply(_as_spec(scenario))
    if params:
        _check_param_names(params)
        spec = replace(spec, params={**spec.params, **params})
    return spec


def _check_param_names(names) -> None:
    unknown = [name for name in names if name not in ModelParams.names()]
    if unknown:
        raise KeyError(
            (
                f"Model parameter {', '.join(unknown)} is not recognized. "
                f"Please use one of the following: {', '.join(ModelParams.names())}"
            )
        )


def simulate(
    scenario: ScenarioLike,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
    max_time: Optional[float] = None,
    output_every: Optional[int] = None,
    params: Optional[Mapping[str, float]] = None,
    workers: int = 1,
) -> SimRun:
    r"""Runs an evacuation scenario and returns the completed run.

    Every agent is driven toward the nearest exit by a social force whose desired speed
    grows with its panic :math:`E \in [0, 1]` and is capped by what its remaining
    physical strength allows. Strength is drained by the positive work of the agent's
    own driving force; panic spreads from more to less frightened neighbours, is raised
    near hazards and by the agent's own exertion, and decays slowly.

    Args:
        scenario: A :class:`ScenarioSpec` or the path of a scenario file.
        seed: Overrides the scenario seed. The run is a pure function of scenario
              and seed.
        dt: Overrides the time step in seconds.
        max_time: Overrides the simulated horizon in seconds.
        output_every: Overrides the frame sampling interval in ticks.
        params: Model constants applied over the scenario's preset and ``[params]``
                entries, e.g. ``{"beta": 0.0}`` to switch contagion off.
        workers: Threads for the per-agent stages; results do not depend on it.

    Returns:
        The run with its sampled frames, metrics and per-agent energy ledger.

    Raises:
        ValidationFailed: if the scenario (after overrides) is invalid.
        PlacementError: if a spawn rectangle is too crowded to place its agents.
        NonFiniteForce: if the integration breaks down.
    """
    spec = with_overrides(scenario, seed, dt, max_time, output_every, params)
    report = validate_scenario(spec)
    if not report.ok:
        raise ValidationFailed(report)
    for warning in report.warnings:
        warn(warning)
    return run(spec, workers=workers)


def save_run(run: SimRun, out_dir: Union[str, pathlib.Path]) -> dict[str, pathlib.Path]:
    """Writes trajectory, metrics, ledger and resolved parameters of a run.

    Args:
        run: Completed run.
        out_dir: Directory to write into; created if missing.

    Returns:
        Path of every written file keyed by ``trajectory``, ``metrics``, ``ledger`` and
        ``resolved_params``.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in RUN_FILES.items()}
    write_trajectory(run, paths["trajectory"])
    write_metrics(run, paths["metrics"])
    write_ledger(run, paths["ledger"])
    write_resolved_params(run, paths["resolved_params"])
    return paths


def _value_label(value: float) -> str:
    return f"{value:g}"


def _sweep_cell(spec: ScenarioSpec, cell_dir: pathlib.Path) -> dict[str, float]:
    result = run(spec)
    save_run(result, cell_dir)
    final = result.metrics.series.iloc[-1]
    return {
        "evacuation_time": result.metrics.evacuation_time,
        "exited": int(final["exited"]),
        "mean_panic": float(final["mean_panic"]),
        "max_panic": float(final["max_panic"]),
        "mean_strength_frac": float(final["mean_strength_frac"]),
        "mean_speed": float(final["mean_speed"]),
    }


def sweep(
    scenario: ScenarioLike,
    out_dir: Union[str, pathlib.Path],
    param: str,
    values: Sequence[float],
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """Runs a scenario once per combination of parameter value and seed.

    Each run is written to ``out_dir/<param>=<value>/seed=<seed>/`` and one summary row
    per run goes to ``out_dir/sweep-summary.csv``.

    Args:
        scenario: A :class:`ScenarioSpec` or the path of a scenario file.
        out_dir: Root directory of the sweep.
        param: Name of the model constant to vary, e.g. ``beta``.
        values: Values of ``param``; one cell each.
        seeds: Seeds per value. Defaults to the scenario seed.
        workers: Number of processes running cells concurrently.

    Returns:
        The summary: ``param``, ``value``, ``seed``, evacuation time and the final
        aggregates of every run, in value-major order.

    Raises:
        KeyError: if ``param`` is not a model constant.
        ValueError: if two values map to the same directory name.
        ValidationFailed: if a cell's scenario is invalid; nothing is run then.
    """
    base = _as_spec(scenario)
    _check_param_names([param])
    seeds = list(seeds) if seeds else [base.sim.seed]
    labels = [_value_label(v) for v in values]
    if len(set(labels)) != len(labels):
        raise ValueError(f"Sweep values {list(values)} do not have distinct labels.")

    out_dir = pathlib.Path(out_dir)
    cells = []
    for value, label in zip(values, labels):
        for seed in seeds:
            spec = with_overrides(base, seed=seed, params={param: value})
            report = validate_scenario(spec)
            if not report.ok:
                raise ValidationFailed(report)
            cells.append((value, seed, spec, out_dir / f"{param}={label}" / f"seed={seed}"))

    logger.info("sweeping %s over %d values and %d seeds", param, len(labels), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_cell, spec, cell_dir) for _, _, spec, cell_dir in cells]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = []
        for value, seed, spec, cell_dir in cells:
            logger.info("sweep cell %s=%s seed=%d", param, _value_label(value), seed)
            outcomes.append(_sweep_cell(spec, cell_dir))

    summary = pd.DataFrame(
        [
            {"param": param, "value": value, "seed": seed, **outcome}
            for (value, seed, _, _), outcome in zip(cells, outcomes)
        ]
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out_dir / SUMMARY_FILE, index=False, float_format="%.6f")
    return summary
