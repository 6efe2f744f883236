"""Frame -> prior maps -> stacked network input."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .. import gridworld as gw
from .. import perception
from ..agent import CellBatch
from ..ltn import derive_fact_maps

CONDITIONS = {"none": 3, "types": 7, "types_facts": 9}


def channels(condition: str) -> int:
    try:
        return CONDITIONS[condition]
    except KeyError:
        raise ValueError(f"unknown condition {condition!r}; expected one of {sorted(CONDITIONS)}") from None


def build_input(obs: np.ndarray, condition: str, object_maps: Optional[np.ndarray] = None,
                fact_maps: Optional[np.ndarray] = None) -> np.ndarray:
    """Concatenate [image | object maps | fact maps] along channels, maps upsampled to the frame."""
    channels(condition)
    obs = np.asarray(obs, dtype=float)
    parts = [obs]
    if condition in ("types", "types_facts"):
        if object_maps is None:
            raise ValueError(f"condition {condition!r} needs object maps")
        parts.append(perception.upsample_maps(object_maps, obs.shape[:2]))
    if condition == "types_facts":
        if fact_maps is None:
            raise ValueError("condition 'types_facts' needs fact maps")
        parts.append(perception.upsample_maps(fact_maps, obs.shape[:2]))
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class PackedInput:
    """Compact replay form of one stacked input.

    ``mask`` is (5, 5, 100): the paint mask of each cell in row-major pixel
    order; ``maps`` holds the cell-level prior channels. ``to_array``
    reproduces :func:`build_input` exactly.
    """

    mask: np.ndarray
    object_color: tuple
    background_color: tuple
    maps: Optional[np.ndarray]  # (5, 5, k) or None

    def to_array(self) -> np.ndarray:
        return PackedInput.stack([self]).to_array()[0]

    @staticmethod
    def stack(items: Sequence["PackedInput"]) -> CellBatch:
        return CellBatch(
            masks=np.stack([p.mask for p in items]),
            fg=np.array([p.object_color for p in items]),
            bg=np.array([p.background_color for p in items]),
            maps=None if items[0].maps is None else np.stack([p.maps for p in items]),
        )


def _cell_mask(mask: np.ndarray) -> np.ndarray:
    return mask.reshape(gw.GRID, gw.CELL, gw.GRID, gw.CELL).transpose(0, 2, 1, 3).reshape(gw.GRID, gw.GRID, -1)


class PriorPipeline:
    """Renders a state and derives the prior channels required by a condition."""

    def __init__(self, condition: str, setting: gw.Setting, groundings: Optional[Mapping] = None):
        channels(condition)
        if condition == "types_facts" and groundings is None:
            raise ValueError("condition 'types_facts' needs trained groundings")
        self.condition = condition
        self.setting = setting
        self.groundings = groundings

    @property
    def in_channels(self) -> int:
        return CONDITIONS[self.condition]

    def pack(self, state: gw.GridState) -> PackedInput:
        mask = gw.render_mask(state).astype(bool)
        maps = None
        if self.condition != "none":
            obs = np.where(mask[..., None], np.asarray(self.setting.object_color),
                           np.asarray(self.setting.background_color))
            maps = perception.build_object_maps(obs)
            if self.condition == "types_facts":
                maps = np.concatenate([maps, derive_fact_maps(maps, self.groundings)], axis=-1)
        return PackedInput(_cell_mask(mask), self.setting.object_color, self.setting.background_color, maps)

    def input(self, state: gw.GridState) -> np.ndarray:
        """Full stacked input via :func:`build_input`."""
        obs = gw.render(state, self.setting)
        if self.condition == "none":
            return build_input(obs, "none")
        maps = perception.build_object_maps(obs)
        facts = derive_fact_maps(maps, self.groundings) if self.condition == "types_facts" else None
        return build_input(obs, self.condition, maps, facts)
