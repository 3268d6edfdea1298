"""Deterministic discrete gridworld with noisy odometry.

Maps are 2-D tile arrays (free / wall / numbered landmark tiles). The agent
moves on free cells, receives a local tile patch plus a pose estimate that is
the cumulative sum of per-step noisy deltas. Ground-truth position is kept on
the state for evaluation bookkeeping only.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

# Tile codes. Landmark tiles are FIRST_LANDMARK + (id - 1) for ids 1..MAX_LANDMARK_ID.
FREE = 0
WALL = 1
FIRST_LANDMARK = 2
MAX_LANDMARK_ID = 8
N_TILE_KINDS = FIRST_LANDMARK + MAX_LANDMARK_ID

# Cardinal action set (didactic four-action variant).
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
CARDINAL_ACTIONS = (UP, DOWN, LEFT, RIGHT)
CARDINAL_DELTA = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}
_CARDINAL_DELTA = CARDINAL_DELTA

# Orientation variant: move ahead plus quarter turns.
MOVE_AHEAD, TURN_LEFT, TURN_RIGHT = 0, 1, 2
ORIENTATION_ACTIONS = (MOVE_AHEAD, TURN_LEFT, TURN_RIGHT)
_HEADING_DELTA = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}  # N E S W


def is_landmark(tile: int) -> bool:
    return tile >= FIRST_LANDMARK


def landmark_id(tile: int) -> int:
    """1-based landmark id of a landmark tile."""
    return tile - FIRST_LANDMARK + 1


@dataclass
class GridMap:
    """Bounded tile grid with per-cell room labels.

    ``tiles`` is indexed ``tiles[x, y]``; boundary cells are walls.
    ``rooms[x, y]`` is a small room label for free cells and -1 for walls.
    """

    width: int
    height: int
    tiles: np.ndarray
    rooms: np.ndarray

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and self.tiles[x, y] != WALL

    def free_cells(self) -> List[Tuple[int, int]]:
        xs, ys = np.nonzero(self.tiles != WALL)
        return list(zip(xs.tolist(), ys.tolist()))

    def n_rooms(self) -> int:
        return int(self.rooms.max()) + 1

    def patch(self, x: int, y: int, k: int = 5) -> np.ndarray:
        """k x k tile window centered on (x, y); out-of-bounds reads as wall."""
        r = k // 2
        out = np.full((k, k), WALL, dtype=np.int8)
        for i in range(-r, r + 1):
            for j in range(-r, r + 1):
                if self.in_bounds(x + i, y + j):
                    out[i + r, j + r] = self.tiles[x + i, y + j]
        return out

    def to_text(self) -> str:
        lines = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                t = int(self.tiles[x, y])
                if t == WALL:
                    row.append("#")
                elif t == FREE:
                    row.append(".")
                else:
                    row.append(str(landmark_id(t)))
            lines.append("".join(row))
        return "\n".join(lines) + "\n"


class MapError(ValueError):
    pass


def map_from_text(text: str) -> GridMap:
    """Parse the plain-text map format: '#' wall, '.' free, digits for landmarks."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    height = len(lines)
    if any(len(ln) != width for ln in lines):
        raise MapError("ragged map rows")
    tiles = np.zeros((width, height), dtype=np.int8)
    for y, ln in enumerate(lines):
        for x, ch in enumerate(ln):
            if ch == "#":
                tiles[x, y] = WALL
            elif ch == ".":
                tiles[x, y] = FREE
            elif ch.isdigit() and ch != "0":
                tiles[x, y] = FIRST_LANDMARK + int(ch) - 1
            else:
                raise MapError(f"bad map character {ch!r} at ({x},{y})")
    grid = GridMap(width, height, tiles, _label_single_room(tiles))
    _validate(grid)
    return grid


def _label_single_room(tiles: np.ndarray) -> np.ndarray:
    rooms = np.where(tiles != WALL, 0, -1)
    return rooms.astype(np.int8)


def _validate(grid: GridMap) -> None:
    if not (grid.tiles[0, :] == WALL).all() or not (grid.tiles[-1, :] == WALL).all():
        raise MapError("boundary must be wall")
    if not (grid.tiles[:, 0] == WALL).all() or not (grid.tiles[:, -1] == WALL).all():
        raise MapError("boundary must be wall")
    free = grid.free_cells()
    if not free:
        raise MapError("no free cells")
    if len(flood_fill(grid, free[0])) != len(free):
        raise MapError("free space is not connected")


def flood_fill(grid: GridMap, start: Tuple[int, int]) -> set:
    """All free cells reachable from start by cardinal moves."""
    seen = {start}
    stack = [start]
    while stack:
        x, y = stack.pop()
        for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nxt = (x + dx, y + dy)
            if nxt not in seen and grid.is_free(*nxt):
                seen.add(nxt)
                stack.append(nxt)
    return seen


# FourRooms: 21x17 bounded grid, 19x15 interior, cross walls with 4 doorways.
# Free cells: 19*15 - (19 + 15 - 1) + 4 = 256.
_FR_W, _FR_H = 21, 17
_FR_VX, _FR_HY = 10, 8
_FR_DOORS = ((_FR_VX, 4), (_FR_VX, 12), (5, _FR_HY), (15, _FR_HY))


def make_four_rooms(seed: int, landmarks_per_room: int = 4) -> GridMap:
    """Classic four-room layout with exactly 256 free cells.

    Landmark tiles are placed deterministically from the seed, at least two
    per room, in a loose cluster around each room center so most room cells
    see more than one landmark in a 5x5 window.
    """
    tiles = np.full((_FR_W, _FR_H), WALL, dtype=np.int8)
    tiles[1:-1, 1:-1] = FREE
    tiles[_FR_VX, 1:-1] = WALL
    tiles[1:-1, _FR_HY] = WALL
    for dx, dy in _FR_DOORS:
        tiles[dx, dy] = FREE

    rooms = np.full((_FR_W, _FR_H), -1, dtype=np.int8)
    for x in range(1, _FR_W - 1):
        for y in range(1, _FR_H - 1):
            if tiles[x, y] == WALL:
                continue
            rooms[x, y] = (0 if x < _FR_VX else 1) + (0 if y < _FR_HY else 2)
    # Doorway cells sit on the dividing walls; give each the label of one side.
    rooms[_FR_VX, 4] = 0
    rooms[_FR_VX, 12] = 2
    rooms[5, _FR_HY] = 0
    rooms[15, _FR_HY] = 1

    rng = np.random.default_rng(seed)
    centers = ((5, 4), (15, 4), (5, 12), (15, 12))
    offsets = ((-2, 0), (2, 0), (0, -2), (0, 2), (-2, -2), (2, 2))
    next_id = 1
    for cx, cy in centers:
        placed = 0
        for ox, oy in offsets[:max(2, landmarks_per_room)]:
            jx = int(rng.integers(-1, 2))
            jy = int(rng.integers(-1, 2))
            x = int(np.clip(cx + ox + jx, 1, _FR_W - 2))
            y = int(np.clip(cy + oy + jy, 1, _FR_H - 2))
            if tiles[x, y] != FREE:
                x, y = cx + ox, cy + oy
            if tiles[x, y] != FREE:
                continue
            tiles[x, y] = FIRST_LANDMARK + (next_id - 1)
            next_id = next_id % MAX_LANDMARK_ID + 1
            placed += 1
        # Landmark placement never touches walls, so free count stays 256.
        assert placed >= 2
    grid = GridMap(_FR_W, _FR_H, tiles, rooms)
    _validate(grid)
    return grid


def make_maze(width: int, height: int, seed: int, landmark_every: int = 4) -> GridMap:
    """Procedural maze (recursive backtracker) with landmarks sprinkled."""
    if width % 2 == 0:
        width += 1
    if height % 2 == 0:
        height += 1
    rng = np.random.default_rng(seed)
    tiles = np.full((width, height), WALL, dtype=np.int8)
    start = (1, 1)
    tiles[start] = FREE
    stack = [start]
    while stack:
        x, y = stack[-1]
        options = []
        for dx, dy in ((0, 2), (0, -2), (2, 0), (-2, 0)):
            nx, ny = x + dx, y + dy
            if 0 < nx < width - 1 and 0 < ny < height - 1 and tiles[nx, ny] == WALL:
                options.append((dx, dy))
        if not options:
            stack.pop()
            continue
        dx, dy = options[int(rng.integers(len(options)))]
        tiles[x + dx // 2, y + dy // 2] = FREE
        tiles[x + dx, y + dy] = FREE
        stack.append((x + dx, y + dy))
    free = [(x, y) for x in range(width) for y in range(height) if tiles[x, y] == FREE]
    next_id = 1
    for idx, (x, y) in enumerate(free):
        if idx % landmark_every == 0:
            tiles[x, y] = FIRST_LANDMARK + (next_id - 1)
            next_id = next_id % MAX_LANDMARK_ID + 1
    grid = GridMap(width, height, tiles, _label_single_room(tiles))
    _validate(grid)
    return grid


@dataclass
class AgentState:
    x: int
    y: int
    heading: int = 0  # cardinal index, used by the orientation variant
    step_count: int = 0
    pose_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    start: Tuple[int, int] = (0, 0)  # true spawn cell, evaluation bookkeeping

    def true_pose(self) -> np.ndarray:
        """Exact pose relative to episode start (evaluation only)."""
        return np.array([self.x - self.start[0], self.y - self.start[1],
                         float(self.heading)])


@dataclass
class Observation:
    patch: np.ndarray
    pose_est: np.ndarray
    collided: bool = False


class GridEnv:
    """Environment wrapper binding a map, action variant and noise scale.

    Transitions are pure in (state, action, rng draw); instances hold no
    mutable agent state, so independent copies may run concurrently.
    """

    def __init__(self, grid: GridMap, noise_scale: float = 0.0,
                 variant: str = "cardinal", patch_size: int = 5):
        if variant not in ("cardinal", "orientation"):
            raise ValueError(f"unknown variant {variant!r}")
        if patch_size % 2 == 0:
            raise ValueError("patch size must be odd")
        self.grid = grid
        self.noise_scale = float(noise_scale)
        self.variant = variant
        self.patch_size = patch_size

    @property
    def n_actions(self) -> int:
        return 4 if self.variant == "cardinal" else 3

    def spawn(self, rng: np.random.Generator) -> AgentState:
        cells = self.grid.free_cells()
        x, y = cells[int(rng.integers(len(cells)))]
        return AgentState(x=x, y=y, start=(x, y))

    def observe(self, state: AgentState, collided: bool = False) -> Observation:
        return Observation(self.grid.patch(state.x, state.y, self.patch_size),
                           state.pose_est.copy(), collided)

    def observation_at(self, x: int, y: int,
                       pose_est: Optional[np.ndarray] = None) -> Observation:
        """Observation as captured at an arbitrary cell (evaluation harness)."""
        pose = np.zeros(3) if pose_est is None else np.asarray(pose_est, float)
        return Observation(self.grid.patch(x, y, self.patch_size), pose, False)

    def step(self, state: AgentState, action: int,
             rng: np.random.Generator) -> Tuple[AgentState, Observation]:
        if self.variant == "cardinal":
            if action not in CARDINAL_ACTIONS:
                raise ValueError(f"bad cardinal action {action}")
            dx, dy = _CARDINAL_DELTA[action]
            heading = state.heading
        else:
            if action not in ORIENTATION_ACTIONS:
                raise ValueError(f"bad orientation action {action}")
            heading = state.heading
            dx = dy = 0
            if action == TURN_LEFT:
                heading = (heading - 1) % 4
            elif action == TURN_RIGHT:
                heading = (heading + 1) % 4
            else:
                dx, dy = _HEADING_DELTA[heading]

        nx, ny = state.x + dx, state.y + dy
        collided = (dx or dy) and not self.grid.is_free(nx, ny)
        if collided:
            nx, ny = state.x, state.y
        true_delta = np.array([nx - state.x, ny - state.y,
                               float(heading - state.heading)])
        if self.noise_scale > 0.0:
            noisy_delta = true_delta + rng.normal(0.0, self.noise_scale, 3)
        else:
            noisy_delta = true_delta
        new_state = replace(
            state, x=nx, y=ny, heading=heading,
            step_count=state.step_count + 1,
            pose_est=state.pose_est + noisy_delta,
        )
        return new_state, self.observe(new_state, collided=bool(collided))
