"""Line-oriented ``key = value`` overrides for agent and plan settings.

Blank lines and ``#`` comments are ignored. Keys name either an
:class:`~ltnrl.agent.AgentConfig` field or one of :data:`PLAN_KEYS`.
"""

from __future__ import annotations

import dataclasses
from typing import Any

from ..agent import AgentConfig

PLAN_KEYS = {
    "phase_steps": int,
    "eval_every": int,
    "n_phases": int,
    "eval_trajectories": int,
    "eval_epsilon": float,
    "eval_at_start": bool,
    "ltn_iterations": int,
    "ltn_lr": float,
}
AGENT_KEYS = {f.name: type(f.default) for f in dataclasses.fields(AgentConfig)}


class ConfigError(ValueError):
    pass


def _convert(kind: type, raw: str, where: str) -> Any:
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw.replace("_", ""))
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {kind.__name__}, got {raw!r}") from None


def parse_config(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Return ``(agent_overrides, plan_overrides)``; unknown or repeated keys are errors."""
    agent, plan = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not raw:
            raise ConfigError(f"{where}: missing value for {key!r}")
        if key in AGENT_KEYS:
            target, kind = agent, AGENT_KEYS[key]
        elif key in PLAN_KEYS:
            target, kind = plan, PLAN_KEYS[key]
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in target:
            raise ConfigError(f"{where}: {key!r} set twice")
        target[key] = _convert(kind, raw, where)
    return agent, plan


def load_config(path) -> tuple[dict, dict]:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
