"""Uniform-grid neighbour queries and the exit-distance navigation field."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .exceptions import BlockedError, UnreachableError
from .utils import segment_distance, segment_hits_rect_interior

if TYPE_CHECKING:
    from .model import AgentState, Rect, ScenarioSpec, Segment, SpawnGroup

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# Row-major neighbour offsets (dy, dx); their position is the tie-break index.
NEIGHBOUR_OFFSETS = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0))
_EXIT_SAMPLES_PER_CELL = 4
# Distance (m) from an exit inside which agents aim at the opening itself.
DOOR_APPROACH = 1.5


class SpatialGrid:
    """Buckets of agent ids keyed by integer cell coordinates.

    Only non-exited agents are binned. ``ids`` is ascending and ``positions[k]`` belongs
    to ``ids[k]``; bucket lists are ascending by id.
    """

    def __init__(self, ids: np.ndarray, positions: np.ndarray, cell: float) -> None:
        if not cell > 0:
            raise ValueError("cell must be > 0.")
        self.cell = float(cell)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.coords = np.floor(self.positions / self.cell).astype(np.int64)
        self._build_index()

    def _build_index(self) -> None:
        if len(self.ids) == 0:
            self._span = 3
            self._keys = np.empty(0, dtype=np.int64)
            self._order = np.empty(0, dtype=np.int64)
            self._sorted_keys = self._keys
            return
        origin = self.coords.min(axis=0)
        self._origin = origin
        self._span = int(self.coords[:, 1].max() - origin[1]) + 3
        self._keys = self._key(self.coords)
        # stable: ids are ascending, so ties within a bucket stay id-ordered
        self._order = np.argsort(self._keys, kind="stable")
        self._sorted_keys = self._keys[self._order]

    def _key(self, coords: np.ndarray) -> np.ndarray:
        return (coords[..., 0] - self._origin[0] + 1) * self._span + (
            coords[..., 1] - self._origin[1] + 1
        )

    @property
    def buckets(self) -> dict[tuple[int, int], list[int]]:
        buckets: dict[tuple[int, int], list[int]] = {}
        for k in self._order:
            cx, cy = self.coords[k]
            buckets.setdefault((int(cx), int(cy)), []).append(int(self.ids[k]))
        return buckets

    def candidate_pairs(self, radius: float):
        """All ordered pairs of binned agents within ``radius`` of each other.

        Returns:
            ``(i, j, d)`` where ``i`` and ``j`` index ``self.ids`` and ``d`` is the
            centre distance; sorted by ``i`` then ``j`` and without ``i == j``.
        """
        self._check_radius(radius)
        n = len(self.ids)
        if n == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, np.empty(0)
        rows, cols = [], []
        own = np.arange(n)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                wanted = self._keys + dx * self._span + dy
                lo = np.searchsorted(self._sorted_keys, wanted, side="left")
                hi = np.searchsorted(self._sorted_keys, wanted, side="right")
                counts = hi - lo
                total = int(counts.sum())
                if total == 0:
                    continue
                run_start = np.repeat(np.cumsum(counts) - counts, counts)
                within = np.arange(total) - run_start
                rows.append(np.repeat(own, counts))
                cols.append(self._order[np.repeat(lo, counts) + within])
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        d = np.hypot(
            self.positions[i, 0] - self.positions[j, 0], self.positions[i, 1] - self.positions[j, 1]
        )
        keep = (i != j) & (d <= radius)
        i, j, d = i[keep], j[keep], d[keep]
        order = np.lexsort((j, i))
        return i[order], j[order], d[order]

    def _check_radius(self, radius: float) -> None:
        if radius > self.cell:
            raise ValueError("query radius must not exceed the grid cell size.")


def build_grid(agents: Iterable[AgentState], cell: float) -> SpatialGrid:
    """Bins the non-exited agents into square cells of side ``cell``."""
    active = sorted((a for a in agents if not a.exited), key=lambda a: a.id)
    ids = np.array([a.id for a in active], dtype=np.int64)
    positions = np.array([a.pos for a in active], dtype=float).reshape(-1, 2)
    return SpatialGrid(ids, positions, cell)


def query_neighbors(
    grid: SpatialGrid,
    center: Sequence[float],
    radius: float,
    exclude_id: Optional[int] = None,
) -> list[tuple[int, float]]:
    """Agents whose centre lies within ``radius`` of ``center``.

    Args:
        grid: Grid to search; ``radius`` must not exceed its cell size.
        center: Query point.
        radius: Inclusive search radius.
        exclude_id: Id left out of the result (the querying agent itself).

    Returns:
        ``(id, distance)`` pairs in ascending id order.
    """
    grid._check_radius(radius)
    if len(grid.ids) == 0:
        return []
    center = np.asarray(center, dtype=float)
    home = np.floor(center / grid.cell).astype(np.int64)
    found = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            key = grid._key(home + np.array([dx, dy]))
            lo = np.searchsorted(grid._sorted_keys, key, side="left")
            hi = np.searchsorted(grid._sorted_keys, key, side="right")
            found.append(grid._order[lo:hi])
    members = np.concatenate(found)
    d = np.hypot(grid.positions[members, 0] - center[0], grid.positions[members, 1] - center[1])
    hits = [
        (int(grid.ids[k]), float(dist))
        for k, dist in zip(members, d)
        if dist <= radius and grid.ids[k] != exclude_id
    ]
    return sorted(hits)


@dataclass(frozen=True, eq=False)
class NavField:
    """Geodesic distance to the nearest exit on a uniform grid.

    Arrays are indexed ``[row, col]`` with row 0 at ``y = 0``. ``dist`` is ``inf`` on
    blocked and unreachable cells, 0 on exit cells; ``dir`` is a unit vector wherever
    ``dist`` is finite and positive and zero elsewhere.
    """

    nx: int
    ny: int
    cell_size: float
    dist: np.ndarray
    dir: np.ndarray
    blocked: np.ndarray
    exit_cells: np.ndarray
    obstacles: tuple[Rect, ...]
    exits: tuple[Segment, ...]

    def cell_of(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(row, col)`` of the cell containing each position, clamped to the grid."""
        positions = np.asarray(positions, dtype=float)
        col = np.clip(np.floor(positions[..., 0] / self.cell_size), 0, self.nx - 1)
        row = np.clip(np.floor(positions[..., 1] / self.cell_size), 0, self.ny - 1)
        return row.astype(np.int64), col.astype(np.int64)

    def cell_center(self, row, col) -> np.ndarray:
        return np.stack(
            ((np.asarray(col) + 0.5) * self.cell_size, (np.asarray(row) + 0.5) * self.cell_size),
            axis=-1,
        )

    def goal_directions(
        self, positions: np.ndarray, radii: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """Heading of every agent as used by the engine.

        The cell direction, except in blocked or unreachable cells (toward the best
        passable neighbour cell in line of sight; zero if there is none) and close to a
        door. Agents on an exit cell, or within ``DOOR_APPROACH`` of an exit with a clear
        line of sight, head straight for the nearest exit with both of its ends pulled in
        by the agent's radius.
        """
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        radii = np.zeros(len(positions)) if radii is None else np.asarray(radii, dtype=float)
        row, col = self.cell_of(positions)
        heading = self.dir[row, col].copy()
        stuck = self.blocked[row, col] | ~np.isfinite(self.dist[row, col])

        if self.exits and len(positions):
            toward, gap, target = self._toward_exit(positions, radii)
            on_exit = self.exit_cells[row, col]
            near = on_exit | (~stuck & (gap <= DOOR_APPROACH))
            for k in np.flatnonzero(near & ~on_exit) if self.obstacles else ():
                sight = (positions[k, 0], positions[k, 1], target[k, 0], target[k, 1])
                if any(segment_hits_rect_interior(sight, rect) for rect in self.obstacles):
                    near[k] = False
            heading[near] = toward[near]

        for k in np.flatnonzero(stuck):
            heading[k] = self._escape(positions[k], int(row[k]), int(col[k]))
        return heading

    def _toward_exit(self, positions: np.ndarray, radii: np.ndarray):
        """Unit heading, distance and aim point of the nearest exit for every position.

        The nearest exit is decided on the true distance, ties to the first exit.
        """
        gap = np.full(len(positions), np.inf)
        target = np.zeros_like(positions)
        for seg in self.exits:
            d = segment_distance(positions, seg)
            nearer = d < gap
            gap = np.where(nearer, d, gap)
            target[nearer] = _inset_closest(positions[nearer], seg, radii[nearer])
        delta = target - positions
        norm = np.hypot(delta[:, 0], delta[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            heading = np.where(norm[:, None] > 1e-12, delta / norm[:, None], 0.0)
        return heading, gap, target

    def _escape(self, pos: np.ndarray, row: int, col: int) -> np.ndarray:
        best_score, best_heading = np.inf, np.zeros(2)
        for dy, dx in NEIGHBOUR_OFFSETS:
            r, c = row + dy, col + dx
            if not (0 <= r < self.ny and 0 <= c < self.nx):
                continue
            if self.blocked[r, c] or not np.isfinite(self.dist[r, c]):
                continue
            center = self.cell_center(r, c)
            sight = (pos[0], pos[1], center[0], center[1])
            if any(segment_hits_rect_interior(sight, rect) for rect in self.obstacles):
                continue
            delta = center - pos
            length = math.hypot(delta[0], delta[1])
            score = self.dist[r, c] + length
            if score < best_score and length > 0:
                best_score, best_heading = score, delta / length
        if not np.isfinite(best_score):
            logger.debug("no passable neighbour in sight of %s", tuple(pos))
        return best_heading

    def dump(self) -> str:
        """Distance matrix as text, top grid row first, ``inf`` for infinite cells."""
        lines = []
        for row in self.dist[::-1]:
            lines.append(" ".join("inf" if not np.isfinite(v) else f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"


def build_nav_field(spec: ScenarioSpec) -> NavField:
    """Navigation field of a scenario; unreachable spawn areas are not an error here."""
    cs = spec.cell_size
    nx = max(1, int(math.ceil(spec.width / cs - 1e-9)))
    ny = max(1, int(math.ceil(spec.height / cs - 1e-9)))
    blocked = _rasterize_obstacles(spec.obstacles, nx, ny, cs)
    exit_cells = _rasterize_exits(spec.exits, nx, ny, cs) & ~blocked

    sources = np.flatnonzero(exit_cells.ravel())
    if sources.size:
        graph = _passability_graph(blocked, cs)
        dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
        dist = np.asarray(dist, dtype=float).reshape(ny, nx)
    else:
        dist = np.full((ny, nx), np.inf)
    dist[blocked] = np.inf
    dist[exit_cells] = 0.0

    return NavField(
        nx=nx,
        ny=ny,
        cell_size=cs,
        dist=dist,
        dir=_descent_directions(dist, cs),
        blocked=blocked,
        exit_cells=exit_cells,
        obstacles=tuple(spec.obstacles),
        exits=tuple(spec.exits),
    )


def compute_nav_field(spec: ScenarioSpec) -> NavField:
    """8-neighbour Dijkstra distance to the exits and its steepest-descent directions.

    Edge costs are ``cell_size`` orthogonally and ``cell_size * sqrt(2)`` diagonally; all
    exit cells are sources at distance 0. Each finite, positive cell points at the
    neighbour minimising ``dist + edge cost``, ties to the first neighbour in row-major
    order.

    Raises:
        UnreachableError: listing every spawn group whose rectangle has no finite cell.
    """
    field = build_nav_field(spec)
    unreachable = unreachable_groups(field, spec.groups)
    if unreachable:
        raise UnreachableError(unreachable)
    return field


def unreachable_groups(field: NavField, groups: Sequence[SpawnGroup]) -> list[int]:
    """Indices of the spawn groups with a cell that has no route to an exit."""
    found = []
    for k, group in enumerate(groups):
        cells = spawn_cells(field, group.rect)
        if cells.size == 0 or not np.isfinite(field.dist.ravel()[cells]).all():
            found.append(k)
    return found


def goal_direction(field: NavField, pos: Sequence[float]) -> np.ndarray:
    """Direction of the cell containing ``pos`` (zero on an exit cell).

    Raises:
        BlockedError: when the cell is an obstacle cell or has no route to an exit.
    """
    row, col = field.cell_of(np.asarray(pos, dtype=float))
    if field.blocked[row, col] or not np.isfinite(field.dist[row, col]):
        raise BlockedError(pos)
    return field.dir[row, col].copy()


def spawn_cells(field: NavField, rect: Rect) -> np.ndarray:
    """Flat indices of the non-blocked cells touched by a spawn rectangle."""
    cs = field.cell_size
    c0 = min(max(int(math.floor(rect.x / cs)), 0), field.nx - 1)
    r0 = min(max(int(math.floor(rect.y / cs)), 0), field.ny - 1)
    c1 = min(max(int(math.ceil((rect.x + rect.w) / cs)) - 1, c0), field.nx - 1)
    r1 = min(max(int(math.ceil((rect.y + rect.h) / cs)) - 1, r0), field.ny - 1)
    rows, cols = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    flat = (rows * field.nx + cols).ravel()
    return flat[~field.blocked.ravel()[flat]]


def _inset_closest(points: np.ndarray, seg: Segment, inset: np.ndarray) -> np.ndarray:
    """Closest point of ``seg`` with both ends pulled in by ``inset`` (at most half)."""
    x1, y1, x2, y2 = seg
    length = math.hypot(x2 - x1, y2 - y1)
    if length == 0.0:
        return np.broadcast_to(np.array([x1, y1], dtype=float), points.shape).copy()
    ux, uy = (x2 - x1) / length, (y2 - y1) / length
    s = (points[:, 0] - x1) * ux + (points[:, 1] - y1) * uy
    margin = np.minimum(inset, 0.5 * length)
    s = np.clip(s, margin, length - margin)
    return np.stack((x1 + s * ux, y1 + s * uy), axis=-1)


def _rasterize_obstacles(obstacles: Sequence[Rect], nx: int, ny: int, cs: float) -> np.ndarray:
    blocked = np.zeros((ny, nx), dtype=bool)
    lower_x, lower_y = np.arange(nx) * cs, np.arange(ny) * cs
    for rect in obstacles:
        cols = (lower_x + cs > rect.x) & (lower_x < rect.x + rect.w)
        rows = (lower_y + cs > rect.y) & (lower_y < rect.y + rect.h)
        blocked |= rows[:, None] & cols[None, :]
    return blocked


def _rasterize_exits(exits: Sequence[Segment], nx: int, ny: int, cs: float) -> np.ndarray:
    marked = np.zeros((ny, nx), dtype=bool)
    for seg in exits:
        n = max(1, int(math.ceil(seg.length / cs * _EXIT_SAMPLES_PER_CELL)))
        t = (np.arange(n) + 0.5) / n
        xs = seg.x1 + t * (seg.x2 - seg.x1)
        ys = seg.y1 + t * (seg.y2 - seg.y1)
        cols = np.clip(np.floor(xs / cs), 0, nx - 1).astype(np.int64)
        rows = np.clip(np.floor(ys / cs), 0, ny - 1).astype(np.int64)
        marked[rows, cols] = True
    return marked


def _passability_graph(blocked: np.ndarray, cs: float):
    ny, nx = blocked.shape
    index = np.arange(ny * nx).reshape(ny, nx)
    free = ~blocked
    src, dst, cost = [], [], []
    # each undirected edge once: right, up, up-right, up-left
    for dy, dx, weight in ((0, 1, cs), (1, 0, cs), (1, 1, cs * SQRT2), (1, -1, cs * SQRT2)):
        r0, r1 = 0, ny - dy
        c0, c1 = max(0, -dx), nx - max(0, dx)
        a = free[r0:r1, c0:c1]
        b = free[r0 + dy : r1 + dy, c0 + dx : c1 + dx]
        both = a & b
        src.append(index[r0:r1, c0:c1][both])
        dst.append(index[r0 + dy : r1 + dy, c0 + dx : c1 + dx][both])
        cost.append(np.full(int(both.sum()), weight))
    n = ny * nx
    return coo_matrix(
        (np.concatenate(cost), (np.concatenate(src), np.concatenate(dst))), shape=(n, n)
    ).tocsr()


def _descent_directions(dist: np.ndarray, cs: float) -> np.ndarray:
    ny, nx = dist.shape
    padded = np.pad(dist, 1, constant_values=np.inf)
    candidates = np.empty((len(NEIGHBOUR_OFFSETS), ny, nx))
    steps = np.empty((len(NEIGHBOUR_OFFSETS), 2))
    for k, (dy, dx) in enumerate(NEIGHBOUR_OFFSETS):
        edge = cs * SQRT2 if dx and dy else cs
        candidates[k] = padded[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx] + edge
        steps[k] = (dx, dy)
    best = np.argmin(candidates, axis=0)
    unit = steps / np.hypot(steps[:, 0], steps[:, 1])[:, None]
    direction = unit[best]
    movable = np.isfinite(dist) & (dist > 0) & np.isfinite(np.min(candidates, axis=0))
    direction[~movable] = 0.0
    return direction
