"""Errors raised by panicsim."""
from typing import Optional, Sequence


class PanicSimError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PanicSimError, ValueError):
    """A scenario file does not follow the scenario grammar."""

    def __init__(self, message: str, line: int, token: Optional[str] = None) -> None:
        self.line = line
        self.token = token
        where = f"line {line}"
        if token is not None:
            where += f", near {token!r}"
        super().__init__(f"{where}: {message}")


class _ReportError(PanicSimError, ValueError):
    def __init__(self, report) -> None:
        self.report = report
        super().__init__("; ".join(report.errors))


class SemanticError(_ReportError):
    """A scenario file parses but describes an invalid scenario."""


class ValidationFailed(_ReportError):
    """A scenario was handed to the engine although validation found errors."""


class PlacementError(PanicSimError, RuntimeError):
    """Rejection sampling could not place an agent (spawn density too high)."""

    def __init__(self, group: int, agent: int, attempts: int) -> None:
        self.group = group
        self.agent = agent
        super().__init__(
            f"could not place agent {agent} of group {group} after {attempts} attempts; "
            "the spawn rectangle is too crowded"
        )


class UnreachableError(PanicSimError, ValueError):
    """Spawn rectangles without any cell connected to an exit."""

    def __init__(self, groups: Sequence[int]) -> None:
        self.groups = list(groups)
        listed = ", ".join(str(g) for g in self.groups)
        super().__init__(f"spawn rectangle of group(s) {listed} cannot reach any exit")


class BlockedError(PanicSimError, ValueError):
    """A position lies in an obstacle cell or in a cell cut off from every exit."""

    def __init__(self, pos) -> None:
        self.pos = tuple(float(c) for c in pos)
        super().__init__(f"no goal direction at {self.pos}: cell is blocked or unreachable")


class NonFiniteForce(PanicSimError, FloatingPointError):
    """A force component became NaN or infinite; the simulation cannot continue."""

    def __init__(self, agent_id: int, tick: Optional[int] = None) -> None:
        self.agent_id = agent_id
        self.tick = tick
        when = "" if tick is None else f" at tick {tick}"
        super().__init__(f"non-finite force on agent {agent_id}{when}")
