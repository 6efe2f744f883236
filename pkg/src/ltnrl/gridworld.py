"""5x5 object-collection game rendered as a 50x50 RGB image.

States are immutable values; ``step`` returns a new state. Randomness only
enters through the ``numpy.random.Generator`` handed to :func:`reset`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

GRID = 5
CELL = 10
IMAGE = GRID * CELL
MAX_STEPS = 50
MAX_PER_TYPE = 4


class ObjectType(enum.IntEnum):
    CIRCLE = 0
    SQUARE = 1
    CROSS = 2


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


MOVES = {Action.UP: (-1, 0), Action.DOWN: (1, 0), Action.LEFT: (0, -1), Action.RIGHT: (0, 1)}
N_ACTIONS = len(Action)


class EpisodeFinished(RuntimeError):
    """Raised when stepping an episode that has already ended."""


# -- shape bitmaps ---------------------------------------------------------
# 1 = object colour. The perception templates are these exact arrays.

_r, _c = np.mgrid[0:CELL, 0:CELL]
CIRCLE_BITMAP = ((_r - 4.5) ** 2 + (_c - 4.5) ** 2 <= 16).astype(np.uint8)
SQUARE_BITMAP = np.zeros((CELL, CELL), dtype=np.uint8)
SQUARE_BITMAP[1:9, 1:9] = 1
CROSS_BITMAP = ((np.abs(_r - _c) <= 1) | (np.abs(_r + _c - (CELL - 1)) <= 1)).astype(np.uint8)
AGENT_BITMAP = ((np.abs(_r - 4.5) <= 1) | (np.abs(_c - 4.5) <= 1)).astype(np.uint8)
del _r, _c

BITMAPS = {
    ObjectType.CIRCLE: CIRCLE_BITMAP,
    ObjectType.SQUARE: SQUARE_BITMAP,
    ObjectType.CROSS: CROSS_BITMAP,
}

# indexed by cell code: 0 empty, 1+type for objects, 4 agent
_CODE_BITMAPS = np.stack(
    [np.zeros((CELL, CELL), dtype=np.uint8), CIRCLE_BITMAP, SQUARE_BITMAP, CROSS_BITMAP, AGENT_BITMAP]
)
AGENT_CODE = 4


@dataclass(frozen=True)
class Scenario:
    target: frozenset
    avoid: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "target", frozenset(ObjectType(t) for t in self.target))
        object.__setattr__(self, "avoid", frozenset(ObjectType(t) for t in self.avoid))
        if not self.target:
            raise ValueError("a scenario needs at least one target type")
        if self.target & self.avoid:
            raise ValueError("target and avoid types overlap")

    def reward(self, obj: Optional[ObjectType]) -> int:
        if obj is None:
            return 0
        if obj in self.target:
            return 1
        if obj in self.avoid:
            return -1
        return 0


@dataclass(frozen=True)
class Setting:
    object_color: tuple
    background_color: tuple

    def __post_init__(self):
        fg = tuple(float(v) for v in self.object_color)
        bg = tuple(float(v) for v in self.background_color)
        for col in (fg, bg):
            if len(col) != 3 or not all(0.0 <= v <= 1.0 for v in col):
                raise ValueError(f"colours must be RGB triples in [0, 1], got {col}")
        if fg == bg:
            raise ValueError("object and background colours must differ")
        object.__setattr__(self, "object_color", fg)
        object.__setattr__(self, "background_color", bg)

    def inverted(self) -> "Setting":
        return Setting(self.background_color, self.object_color)


C, S, X = ObjectType.CIRCLE, ObjectType.SQUARE, ObjectType.CROSS

SCENARIOS = {
    1: Scenario(target={C}, avoid={X}),
    2: Scenario(target={X}, avoid={C}),
    3: Scenario(target={S}, avoid={X}),
    4: Scenario(target={X}, avoid={S, C}),
}

SETTINGS = {
    1: Setting((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
    2: Setting((1.0, 1.0, 1.0), (0.0, 0.0, 0.0)),
    3: Setting((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    4: Setting((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
}


@dataclass(frozen=True)
class GridState:
    agent: tuple[int, int]
    contents: tuple  # GRID rows of GRID entries, ObjectType or None
    steps: int = 0
    initial_targets: int = 1

    def object_at(self, row: int, col: int) -> Optional[ObjectType]:
        return self.contents[row][col]

    def count(self, types) -> int:
        return sum(1 for row in self.contents for obj in row if obj is not None and obj in types)

    def n_objects(self) -> int:
        return sum(1 for row in self.contents for obj in row if obj is not None)

    def codes(self) -> np.ndarray:
        """Per-cell integer codes (0 empty, 1..3 object type + 1, 4 agent)."""
        out = np.zeros((GRID, GRID), dtype=np.intp)
        for r, row in enumerate(self.contents):
            for c, obj in enumerate(row):
                if obj is not None:
                    out[r, c] = int(obj) + 1
        out[self.agent] = AGENT_CODE
        return out


@dataclass(frozen=True)
class StepResult:
    reward: int
    done: bool
    state: GridState


def reset(rng: np.random.Generator, scenario: Scenario) -> GridState:
    """Random layout: 1..4 objects per type, agent on a free cell."""
    cells = rng.permutation(GRID * GRID)
    counts = rng.integers(1, MAX_PER_TYPE + 1, size=len(ObjectType))
    grid: list[list[Optional[ObjectType]]] = [[None] * GRID for _ in range(GRID)]
    pos = 0
    for obj_type, n in zip(ObjectType, counts):
        for cell in cells[pos : pos + n]:
            grid[cell // GRID][cell % GRID] = obj_type
        pos += n
    agent_cell = int(cells[pos])
    contents = tuple(tuple(row) for row in grid)
    n_targets = sum(int(n) for t, n in zip(ObjectType, counts) if t in scenario.target)
    return GridState(
        agent=(agent_cell // GRID, agent_cell % GRID),
        contents=contents,
        steps=0,
        initial_targets=n_targets,
    )


def is_done(state: GridState, scenario: Scenario) -> bool:
    return state.steps >= MAX_STEPS or state.count(scenario.target) == 0


def step(state: GridState, action: int, scenario: Scenario) -> StepResult:
    if is_done(state, scenario):
        raise EpisodeFinished("episode already finished; call reset()")
    dr, dc = MOVES[Action(action)]
    row = min(max(state.agent[0] + dr, 0), GRID - 1)
    col = min(max(state.agent[1] + dc, 0), GRID - 1)
    obj = state.contents[row][col]
    contents = state.contents
    if obj is not None:
        new_row = list(contents[row])
        new_row[col] = None
        contents = contents[:row] + (tuple(new_row),) + contents[row + 1 :]
    new_state = replace(state, agent=(row, col), contents=contents, steps=state.steps + 1)
    return StepResult(reward=scenario.reward(obj), done=is_done(new_state, scenario), state=new_state)


def max_potential_reward(state: GridState) -> int:
    return state.initial_targets


def render_mask(state: GridState) -> np.ndarray:
    """50x50 binary mask, 1 where the object colour is painted."""
    tiles = _CODE_BITMAPS[state.codes()]  # (5, 5, 10, 10)
    return tiles.transpose(0, 2, 1, 3).reshape(IMAGE, IMAGE)


def render(state: GridState, setting: Setting) -> np.ndarray:
    mask = render_mask(state)
    fg = np.asarray(setting.object_color)
    bg = np.asarray(setting.background_color)
    return np.where(mask[..., None].astype(bool), fg, bg)


_SYMBOLS = {None: ".", C: "o", S: "s", X: "x"}


def to_text(state: GridState) -> str:
    lines = []
    for r, row in enumerate(state.contents):
        chars = [_SYMBOLS[obj] for obj in row]
        if r == state.agent[0]:
            chars[state.agent[1]] = "+"
        lines.append("".join(chars))
    return "\n".join(lines)


def from_text(text: str, steps: int = 0, scenario: Optional[Scenario] = None) -> GridState:
    """Inverse of :func:`to_text`. ``initial_targets`` counts the scenario's targets on the board."""
    lookup = {v: k for k, v in _SYMBOLS.items()}
    rows = [line.strip() for line in text.strip().splitlines()]
    if len(rows) != GRID or any(len(r) != GRID for r in rows):
        raise ValueError(f"expected {GRID} rows of {GRID} symbols")
    agent = None
    grid = []
    for r, line in enumerate(rows):
        row = []
        for c, ch in enumerate(line):
            if ch == "+":
                if agent is not None:
                    raise ValueError("more than one agent")
                agent = (r, c)
                row.append(None)
            elif ch in lookup:
                row.append(lookup[ch])
            else:
                raise ValueError(f"unknown symbol {ch!r} at row {r}, column {c}")
        grid.append(tuple(row))
    if agent is None:
        raise ValueError("no agent on the board")
    state = GridState(agent=agent, contents=tuple(grid), steps=steps, initial_targets=1)
    if scenario is not None:
        state = replace(state, initial_targets=max(1, state.count(scenario.target)))
    return state
