"""Scenario file grammar and the run output files.

A scenario file is made of ``key = value`` lines under ``[domain]``, ``[sim]`` and
``[params]`` headers and repeated ``[[obstacle]]``, ``[[exit]]``, ``[[hazard]]`` and
``[[group]]`` blocks. ``#`` starts a comment. Unknown sections and keys are errors.
"""
import logging
import math
import pathlib
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, TextIO, Union

from .engine import SimRun
from .exceptions import ParseError, SemanticError
from .model import (
    Hazard,
    ModelParams,
    Rect,
    ScenarioSpec,
    Segment,
    SimSettings,
    SpawnGroup,
    validate_scenario,
)
from .spatial import NavField

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]

_TABLES = ("domain", "sim", "params")
_BLOCKS = ("obstacle", "exit", "hazard", "group")
_RANGE = (2, float)
_SCHEMA: dict[str, dict[str, tuple[int, Callable]]] = {
    "domain": {"width": (1, float), "height": (1, float), "cell_size": (1, float)},
    "sim": {"dt": (1, float), "max_time": (1, float), "seed": (1, int), "output_every": (1, int)},
    "params": {name: (1, float) for name in ModelParams.names()},
    "obstacle": {"rect": (4, float)},
    "exit": {"segment": (4, float)},
    "hazard": {"point": (2, float), "A_h": (1, float), "lambda_h": (1, float)},
    "group": {"count": (1, int), "rect": (4, float), **{r: _RANGE for r in SpawnGroup.RANGES}},
}
_REQUIRED = {
    "domain": ("width", "height"),
    "obstacle": ("rect",),
    "exit": ("segment",),
    "hazard": ("point",),
    "group": ("count", "rect"),
}
_FLOAT_PRECISION = "%.6f"


class _Section:
    def __init__(self, name: str, line: int) -> None:
        self.name = name
        self.line = line
        self.values: dict[str, object] = {}

    def set(self, key: str, raw: str, line: int) -> None:
        if key in self.values:
            raise ParseError(f"duplicate key in [{self.name}]", line, key)
        if self.name == "params" and key == "preset":
            if not raw or len(raw.split()) != 1:
                raise ParseError("preset takes a single name", line, raw)
            self.values[key] = raw
            return
        try:
            arity, kind = _SCHEMA[self.name][key]
        except KeyError:
            raise ParseError(f"unknown key in [{self.name}]", line, key) from None
        words = raw.split()
        if len(words) != arity:
            raise ParseError(f"{key} expects {arity} value(s), got {len(words)}", line, raw)
        parsed = []
        for word in words:
            try:
                parsed.append(kind(word))
            except ValueError:
                expected = "an integer" if kind is int else "a number"
                raise ParseError(f"{key} expects {expected}", line, word) from None
        self.values[key] = parsed[0] if arity == 1 else tuple(parsed)

    def require(self) -> None:
        for key in _REQUIRED.get(self.name, ()):
            if key not in self.values:
                raise ParseError(f"[{self.name}] is missing key {key!r}", self.line)


def _read_sections(text: str) -> tuple[dict[str, _Section], dict[str, list[_Section]], int]:
    tables: dict[str, _Section] = {}
    blocks: dict[str, list[_Section]] = {name: [] for name in _BLOCKS}
    current: Optional[_Section] = None
    lines = text.splitlines()
    for number, raw_line in enumerate(lines, start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[[") and line.endswith("]]"):
            name = line[2:-2].strip()
            if name not in _BLOCKS:
                raise ParseError("unknown block", number, line)
            current = _Section(name, number)
            blocks[name].append(current)
        elif line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _TABLES:
                raise ParseError("unknown section", number, line)
            if name in tables:
                raise ParseError("duplicate section", number, line)
            current = tables[name] = _Section(name, number)
        elif "=" in line:
            if current is None:
                raise ParseError("key outside of any section", number, line)
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ParseError("missing key before '='", number, line)
            current.set(key, value, number)
        else:
            raise ParseError("expected a section header or 'key = value'", number, line)
    return tables, blocks, len(lines)


def parse_scenario(text: str, validate: bool = True) -> ScenarioSpec:
    """Parses a scenario file into a :class:`ScenarioSpec` with defaults filled in.

    Args:
        text: Contents of the scenario file.
        validate: Whether to run :func:`validate_scenario` on the result.

    Returns:
        The scenario.

    Raises:
        ParseError: naming the line and offending token of a grammar violation.
        SemanticError: if ``validate`` and the parsed scenario has validation errors.
    """
    tables, blocks, n_lines = _read_sections(text)
    if "domain" not in tables:
        raise ParseError("missing [domain] section", max(n_lines, 1))
    for section in [*tables.values(), *(b for group in blocks.values() for b in group)]:
        section.require()

    domain = tables["domain"].values
    sim = tables["sim"].values if "sim" in tables else {}
    params = dict(tables["params"].values) if "params" in tables else {}
    preset = params.pop("preset", "default")

    spec = ScenarioSpec(
        width=domain["width"],
        height=domain["height"],
        cell_size=domain.get("cell_size", ScenarioSpec.cell_size),
        obstacles=tuple(Rect(*b.values["rect"]) for b in blocks["obstacle"]),
        exits=tuple(Segment(*b.values["segment"]) for b in blocks["exit"]),
        hazards=tuple(
            Hazard(*b.values["point"], A_h=b.values.get("A_h"), lambda_h=b.values.get("lambda_h"))
            for b in blocks["hazard"]
        ),
        groups=tuple(
            SpawnGroup(
                count=b.values["count"],
                rect=Rect(*b.values["rect"]),
                **{r: b.values[r] for r in SpawnGroup.RANGES if r in b.values},
            )
            for b in blocks["group"]
        ),
        preset=preset,
        params=params,
        sim=SimSettings(**sim),
    )
    if validate:
        report = validate_scenario(spec)
        if not report.ok:
            raise SemanticError(report)
        for warning in report.warnings:
            logger.warning("scenario: %s", warning)
    return spec


def _fmt(value) -> str:
    if isinstance(value, (tuple, list)):
        return " ".join(_fmt(v) for v in value)
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return repr(float(value))


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Scenario file text that parses back to an equal :class:`ScenarioSpec`."""
    lines = [
        "[domain]",
        f"width = {_fmt(spec.width)}",
        f"height = {_fmt(spec.height)}",
        f"cell_size = {_fmt(spec.cell_size)}",
        "",
        "[sim]",
    ]
    lines += [f"{key} = {_fmt(getattr(spec.sim, key))}" for key in _SCHEMA["sim"]]
    lines += ["", "[params]", f"preset = {spec.preset}"]
    lines += [f"{key} = {_fmt(value)}" for key, value in spec.params.items()]
    for rect in spec.obstacles:
        lines += ["", "[[obstacle]]", f"rect = {_fmt(rect)}"]
    for seg in spec.exits:
        lines += ["", "[[exit]]", f"segment = {_fmt(seg)}"]
    for hazard in spec.hazards:
        lines += ["", "[[hazard]]", f"point = {_fmt((hazard.x, hazard.y))}"]
        if hazard.A_h is not None:
            lines.append(f"A_h = {_fmt(hazard.A_h)}")
        if hazard.lambda_h is not None:
            lines.append(f"lambda_h = {_fmt(hazard.lambda_h)}")
    for group in spec.groups:
        lines += ["", "[[group]]", f"count = {group.count}", f"rect = {_fmt(group.rect)}"]
        lines += [f"{r} = {_fmt(getattr(group, r))}" for r in SpawnGroup.RANGES]
    return "\n".join(lines) + "\n"


def load_scenario(path: PathLike, validate: bool = True) -> ScenarioSpec:
    """Reads and parses a scenario file; see :func:`parse_scenario`."""
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    return parse_scenario(text, validate=validate)


@contextmanager
def _writing(path: PathLike) -> Iterator[TextIO]:
    path = pathlib.Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    logger.debug("wrote %s", path)


def write_trajectory(run: SimRun, path: PathLike) -> None:
    """Writes ``trajectory.csv``: one row per agent per sampled frame, by ``(t, id)``.

    Raises:
        ValueError: if a panic or strength value left its range.
        OSError: naming the path when the file cannot be written.
    """
    table = run.trajectory_frame()
    if len(table):
        bad_panic = ~table["panic"].between(0.0, 1.0)
        bad_strength = ~table["strength"].between(0.0, run.params.S_max)
        if bad_panic.any() or bad_strength.any():
            row = table[bad_panic | bad_strength].iloc[0]
            raise ValueError(
                f"agent {int(row['id'])} at t={row['t']:.6f} has panic {row['panic']} and "
                f"strength {row['strength']}; refusing to write an out-of-range trajectory."
            )
    with _writing(path) as handle:
        table.to_csv(handle, index=False, float_format=_FLOAT_PRECISION)


def _evacuation_text(value: float) -> str:
    return "inf" if math.isinf(value) else _FLOAT_PRECISION % value


def write_metrics(run: SimRun, path: PathLike) -> None:
    """Writes ``metrics.csv``: the per-tick series and an ``evacuation_time`` line."""
    with _writing(path) as handle:
        run.metrics_frame().to_csv(handle, index=False, float_format=_FLOAT_PRECISION)
        handle.write(f"evacuation_time,{_evacuation_text(run.metrics.evacuation_time)}\n")


def write_ledger(run: SimRun, path: PathLike) -> None:
    """Writes ``ledger.csv``, the per-agent energy account of the run."""
    with _writing(path) as handle:
        run.ledger_frame().to_csv(handle, index=False, float_format=_FLOAT_PRECISION)


def write_resolved_params(run: SimRun, path: PathLike) -> None:
    """Writes every effective run setting and model constant in the scenario grammar."""
    sim = run.scenario.sim
    lines = ["# effective settings of this run", "[sim]"]
    lines += [f"{key} = {_fmt(getattr(sim, key))}" for key in _SCHEMA["sim"]]
    lines += ["", "[params]"]
    lines += [f"{key} = {_fmt(value)}" for key, value in run.params.as_dict().items()]
    with _writing(path) as handle:
        handle.write("\n".join(lines) + "\n")


def write_nav_field(field: NavField, path: PathLike) -> None:
    """Writes the navigation distance matrix, top grid row first."""
    with _writing(path) as handle:
        handle.write(field.dump())
