"""Object detection on rendered frames and the 5x5 object maps built from it.

Each 10x10 cell is reduced to a luminance map, standardised, and correlated
with the renderer's shape bitmaps. Standardisation plus the absolute value of
the correlation makes detection independent of the colour setting, including
foreground/background inversion.
"""

from __future__ import annotations

import numpy as np

from . import gridworld as gw

PREDICATES = ("circle", "square", "cross", "agent")
TEMPLATES = {
    "circle": gw.CIRCLE_BITMAP,
    "square": gw.SQUARE_BITMAP,
    "cross": gw.CROSS_BITMAP,
    "agent": gw.AGENT_BITMAP,
}
EMPTY_THRESHOLD = 0.5
FLAT_STD = 1e-6
# ITU-R BT.601 luma. A plain RGB mean maps pure red and pure blue to the same
# value, which would blank out the red/blue settings.
LUMA = np.array([0.299, 0.587, 0.114])


def _standardize(maps: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-std over the last axis; flat rows become zeros."""
    centred = maps - maps.mean(axis=-1, keepdims=True)
    std = centred.std(axis=-1, keepdims=True)
    flat = std <= FLAT_STD
    return np.where(flat, 0.0, centred / np.where(flat, 1.0, std))


_TEMPLATE_Z = _standardize(np.stack([TEMPLATES[p].reshape(-1).astype(float) for p in PREDICATES]))
_TEMPLATE_CORR = np.abs(_TEMPLATE_Z @ _TEMPLATE_Z.T) / _TEMPLATE_Z.shape[1]
# Largest |correlation| between two different templates. Scores are rescaled so
# that this level maps to 0 and a perfect match to 1.
CONFUSION_FLOOR = float(np.max(_TEMPLATE_CORR - np.eye(len(PREDICATES))))


def extract_patches(obs: np.ndarray) -> np.ndarray:
    """Split a 50x50x3 frame into a (5, 5, 10, 10, 3) array of cell patches."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (gw.IMAGE, gw.IMAGE, 3):
        raise ValueError(f"observation must be {gw.IMAGE}x{gw.IMAGE}x3, got {obs.shape}")
    return obs.reshape(gw.GRID, gw.CELL, gw.GRID, gw.CELL, 3).transpose(0, 2, 1, 3, 4)


def assemble_patches(patches: np.ndarray) -> np.ndarray:
    return np.asarray(patches).transpose(0, 2, 1, 3, 4).reshape(gw.IMAGE, gw.IMAGE, 3)


def normalize_patch(patch: np.ndarray) -> np.ndarray:
    patch = np.asarray(patch, dtype=float)
    lum = patch @ LUMA
    return _standardize(lum.reshape(-1)).reshape(lum.shape)


def _scores(z: np.ndarray) -> np.ndarray:
    """Map standardised patches (..., 100) to detector scores (..., 4)."""
    corr = np.abs(z @ _TEMPLATE_Z.T) / z.shape[-1]
    return np.clip((corr - CONFUSION_FLOOR) / (1.0 - CONFUSION_FLOOR), 0.0, 1.0)


def correlations(patch: np.ndarray) -> np.ndarray:
    """Raw normalized cross-correlation of one patch with each template."""
    z = normalize_patch(patch).reshape(-1)
    return z @ _TEMPLATE_Z.T / z.size


def classify_patch(patch: np.ndarray) -> np.ndarray:
    """Scores in [0, 1] for (circle, square, cross, agent)."""
    return _scores(normalize_patch(patch).reshape(-1))


def build_object_maps(obs: np.ndarray) -> np.ndarray:
    """5x5x4 object maps, channel order (circle, square, cross, agent)."""
    lum = extract_patches(obs) @ LUMA  # (5, 5, 10, 10)
    z = _standardize(lum.reshape(gw.GRID, gw.GRID, gw.CELL * gw.CELL))
    return _scores(z)


def decode_maps(maps: np.ndarray, threshold: float = EMPTY_THRESHOLD) -> np.ndarray:
    """Per-cell codes matching :meth:`GridState.codes` (argmax, empty below threshold)."""
    maps = np.asarray(maps)
    best = maps.argmax(axis=-1)
    codes = np.where(best == 3, gw.AGENT_CODE, best + 1)
    return np.where(maps.max(axis=-1) < threshold, 0, codes)


def upsample_maps(maps: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour block replication of an HxWxK map to target HxW."""
    maps = np.asarray(maps)
    h, w = maps.shape[:2]
    th, tw = target
    if th % h or tw % w:
        raise ValueError(f"target {th}x{tw} is not an integer multiple of {h}x{w}")
    return np.repeat(np.repeat(maps, th // h, axis=0), tw // w, axis=1)
