"""Batched policy evaluation with reward normalised by the initial target count.

A policy is any callable ``policy(states, rng) -> actions`` that maps a list of
``GridState`` to one action per state.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import gridworld as gw
from ..agent import DQNAgent
from .pipeline import PriorPipeline

Policy = Callable[[Sequence[gw.GridState], np.random.Generator], Sequence[int]]
AVOID_COST = 100


class InvariantViolation(RuntimeError):
    """A run produced a value that breaks an environment or scoring invariant."""


@dataclass(frozen=True)
class EvalResult:
    mean: float
    ci95: float
    scores: tuple

    @property
    def n(self) -> int:
        return len(self.scores)


def mean_ci(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width (0 for a single score)."""
    x = np.asarray(scores, dtype=float)
    if len(x) == 0:
        raise ValueError("no scores")
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(len(x)))


def random_policy(states, rng):
    return rng.integers(gw.N_ACTIONS, size=len(states))


def oracle_policy(scenario: gw.Scenario) -> Policy:
    """Cheapest path to the nearest target, where entering an avoid cell costs ``AVOID_COST`` steps."""

    def first_move(state: gw.GridState) -> int:
        start = state.agent
        dist = {start: 0}
        first: dict = {start: None}
        heap = [(0, 0, start)]
        order = 0
        while heap:
            d, _, cell = heapq.heappop(heap)
            if d > dist[cell]:
                continue
            obj = state.object_at(*cell)
            if cell != start and obj is not None and obj in scenario.target:
                return int(first[cell])
            for action, (dr, dc) in gw.MOVES.items():
                nr, nc = cell[0] + dr, cell[1] + dc
                if not (0 <= nr < gw.GRID and 0 <= nc < gw.GRID):
                    continue
                nobj = state.object_at(nr, nc)
                cost = AVOID_COST if nobj is not None and nobj in scenario.avoid else 1
                nd = d + cost
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    first[(nr, nc)] = action if cell == start else first[cell]
                    order += 1
                    heapq.heappush(heap, (nd, order, (nr, nc)))
        return int(gw.Action.UP)

    def policy(states, rng):
        return [first_move(s) for s in states]

    return policy


def agent_policy(agent: DQNAgent, pipeline: PriorPipeline, epsilon: float) -> Policy:
    """Epsilon-greedy over the agent's Q-values, one batched forward pass per step."""

    def policy(states, rng):
        packed = [pipeline.pack(s) for s in states]
        x = type(packed[0]).stack(packed)
        q = agent.online.predict(x)
        greedy = q.argmax(axis=1)
        explore = rng.random(len(states)) < epsilon
        random_actions = rng.integers(gw.N_ACTIONS, size=len(states))
        return np.where(explore, random_actions, greedy)

    return policy


def run_episodes(policy: Policy, scenario: gw.Scenario, n_traj: int, rng: np.random.Generator) -> list[float]:
    """Play ``n_traj`` fresh episodes in lockstep and return normalised scores."""
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    states = [gw.reset(rng, scenario) for _ in range(n_traj)]
    totals = [0] * n_traj
    live = list(range(n_traj))
    while live:
        actions = policy([states[i] for i in live], rng)
        still = []
        for i, a in zip(live, actions):
            res = gw.step(states[i], int(a), scenario)
            states[i] = res.state
            totals[i] += res.reward
            if not res.done:
                still.append(i)
        live = still
    scores = []
    for s, total in zip(states, totals):
        score = total / gw.max_potential_reward(s)
        if score > 1.0:
            raise InvariantViolation(f"normalised reward {score} exceeds 1")
        scores.append(score)
    return scores


def evaluate(policy: Policy, scenario: gw.Scenario, n_traj: int, rng: np.random.Generator) -> EvalResult:
    scores = run_episodes(policy, scenario, n_traj, rng)
    mean, ci = mean_ci(scores)
    return EvalResult(mean, ci, tuple(scores))


def evaluate_agent(agent: DQNAgent, scenario: gw.Scenario, setting: gw.Setting, condition: str, n_traj: int,
                   rng: np.random.Generator, groundings=None, epsilon: float = 0.05) -> EvalResult:
    pipeline = PriorPipeline(condition, setting, groundings)
    return evaluate(agent_policy(agent, pipeline, epsilon), scenario, n_traj, rng)
