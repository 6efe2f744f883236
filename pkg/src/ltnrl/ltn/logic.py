"""Łukasiewicz semantics, predicate groundings and axiom-satisfaction training.

The connectives are written once and work on plain numbers (including
``fractions.Fraction`` for exact checks), numpy arrays and autodiff tensors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import gridworld as gw
from .. import perception
from ..numcore import Adam, Sequential, Tensor, activation, as_tensor, dense, no_grad
from .parser import And, Atom, Formula, Iff, Implies, Not, Or, Theory, parse_theory

TYPE_CHANNELS = {name: i for i, name in enumerate(perception.PREDICATES)}
FACT_PREDICATES = ("goto", "avoid")
N_TYPES = len(perception.PREDICATES)
# one-hot type vectors plus the empty cell, appended to every training batch
CANONICAL_SAMPLES = np.vstack([np.eye(N_TYPES), np.zeros((1, N_TYPES))])


# -- connectives -----------------------------------------------------------

def _max0(x):
    if isinstance(x, Tensor):
        return x.relu()
    if isinstance(x, np.ndarray):
        return np.maximum(x, 0.0)
    return x if x > 0 else x * 0


def _min1(x):
    return x - _max0(x - 1)


def _min(x, y):
    return x - _max0(x - y)


def t_not(a):
    return 1 - a


def t_and(a, b):
    return _max0(a + b - 1)


def t_or(a, b):
    return _min1(a + b)


def t_implies(a, b):
    return _min1(1 - a + b)


def t_iff(a, b):
    return _min(t_implies(a, b), t_implies(b, a))


_BINARY = {And: t_and, Or: t_or, Implies: t_implies, Iff: t_iff}


def _evaluate(formula: Formula, lookup: Callable[[str], object]):
    if isinstance(formula, Atom):
        return lookup(formula.predicate)
    if isinstance(formula, Not):
        return t_not(_evaluate(formula.operand, lookup))
    op = _BINARY[type(formula)]
    return op(_evaluate(formula.left, lookup), _evaluate(formula.right, lookup))


# -- groundings ------------------------------------------------------------

@dataclass
class Known:
    """Type predicate read from one object-map channel."""

    channel: int

    def batch(self, samples):
        return samples[:, self.channel]

    def scalar(self, x):
        return x[self.channel]


class Learnable:
    """Predicate approximated by a small network on the 4-score type vector."""

    def __init__(self, rng: np.random.Generator, hidden: int = 16):
        self.net = Sequential(
            [dense(N_TYPES, hidden), activation("tanh"), dense(hidden, 1), activation("sigmoid")], rng
        )
        self.trained = False

    def batch(self, samples) -> Tensor:
        samples = as_tensor(samples)
        return self.net(samples).reshape(-1)

    def scalar(self, x) -> float:
        return float(self(np.asarray([x], dtype=float))[0])

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.batch(np.asarray(samples, dtype=float).reshape(-1, N_TYPES)).data.copy()

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def state_dict(self) -> dict[str, list]:
        return {name: t.data.tolist() for name, t in self.net.named_parameters()}

    def load_state_dict(self, state: Mapping[str, Sequence]) -> None:
        for name, t in self.net.named_parameters():
            t.data[...] = np.asarray(state[name], dtype=float)
        self.trained = True


@dataclass
class Defined:
    """Predicate defined by a formula over other groundings (used for analytic optima)."""

    formula: Formula
    groundings: Mapping = field(default_factory=dict)

    def batch(self, samples):
        return _evaluate(self.formula, lambda p: self.groundings[p].batch(samples))

    def scalar(self, x):
        return _evaluate(self.formula, lambda p: self.groundings[p].scalar(x))


def known_groundings() -> dict:
    return {name: Known(ch) for name, ch in TYPE_CHANNELS.items()}


def make_groundings(theory: Theory, rng: np.random.Generator) -> dict:
    groundings = {name: Known(TYPE_CHANNELS[name]) for name in theory.known if name in TYPE_CHANNELS}
    for name in theory.learnable:
        groundings[name] = Learnable(rng)
    return groundings


def learnable_parameters(groundings: Mapping) -> list[Tensor]:
    return [p for g in groundings.values() if isinstance(g, Learnable) for p in g.parameters()]


# -- evaluation ------------------------------------------------------------

def eval_formula(formula: Formula, groundings: Mapping, x) -> object:
    """Truth value of ``formula`` on one domain sample (a 4-score vector)."""
    return _evaluate(formula, lambda p: groundings[p].scalar(x))


def formula_truth(formula: Formula, groundings: Mapping, samples) -> Tensor:
    """Per-sample truth values of ``formula`` for an (N, 4) batch."""
    samples = as_tensor(samples)
    return as_tensor(_evaluate(formula, lambda p: groundings[p].batch(samples)))


def satisfaction_tensor(theory: Theory, groundings: Mapping, samples) -> Tensor:
    samples = as_tensor(samples)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("satisfaction needs a non-empty (N, 4) batch of samples")
    total = None
    for ax in theory.axioms:
        mean = formula_truth(ax, groundings, samples).mean()
        total = mean if total is None else total + mean
    return total * (1.0 / len(theory.axioms))


def satisfaction(theory: Theory, groundings: Mapping, samples) -> float:
    """Mean over axioms of the mean truth over samples."""
    with no_grad():
        return satisfaction_tensor(theory, groundings, np.asarray(samples, dtype=float)).item()


# -- training --------------------------------------------------------------

def cell_samples(rng: np.random.Generator, setting: gw.Setting = gw.SETTINGS[1],
                 scenario: gw.Scenario = gw.SCENARIOS[1]) -> np.ndarray:
    """All 25 cell score vectors of a fresh random frame, plus the canonical vectors."""
    state = gw.reset(rng, scenario)
    maps = perception.build_object_maps(gw.render(state, setting))
    return np.vstack([maps.reshape(-1, N_TYPES), CANONICAL_SAMPLES])


@dataclass
class TrainResult:
    groundings: dict
    trace: list

    @property
    def final(self) -> float:
        return self.trace[-1]


def train_groundings(theory: Theory, sample_source: Callable[[np.random.Generator], np.ndarray] | None = None,
                     iterations: int = 2000, lr: float = 0.01, seed: int = 0) -> TrainResult:
    """Fit the learnable predicates by gradient descent on ``1 - satisfaction``.

    ``trace[i]`` is the satisfaction on the batch of iteration ``i`` before its
    update; the last entry is measured after the final update on a fresh batch.
    """
    if not theory.learnable:
        raise ValueError("theory declares no learnable predicates")
    rng = np.random.default_rng(seed)
    groundings = make_groundings(theory, rng)
    params = learnable_parameters(groundings)
    opt = Adam(lr=lr)
    source = sample_source or cell_samples
    trace = []
    for _ in range(iterations):
        samples = source(rng)
        for p in params:
            p.zero_grad()
        sat = satisfaction_tensor(theory, groundings, samples)
        loss = 1.0 - sat
        loss.backward()
        opt.step(params)
        trace.append(sat.item())
    trace.append(satisfaction(theory, groundings, source(rng)))
    for g in groundings.values():
        if isinstance(g, Learnable):
            g.trained = True
    return TrainResult(groundings, trace)


def derive_fact_maps(object_maps: np.ndarray, groundings: Mapping,
                     facts: Sequence[str] = FACT_PREDICATES) -> np.ndarray:
    """Feed every cell's type vector through the fact groundings: (H, W, len(facts))."""
    object_maps = np.asarray(object_maps, dtype=float)
    h, w, k = object_maps.shape
    if k != N_TYPES:
        raise ValueError(f"object maps need {N_TYPES} channels, got {k}")
    flat = object_maps.reshape(-1, k)
    out = np.empty((h * w, len(facts)))
    for i, name in enumerate(facts):
        g = groundings.get(name)
        if g is None:
            raise KeyError(f"no grounding for fact predicate {name!r}")
        if isinstance(g, Learnable) and not g.trained:
            raise ValueError(f"grounding for {name!r} has not been trained")
        if isinstance(g, Learnable):
            out[:, i] = g(flat)
        else:
            with no_grad():
                out[:, i] = as_tensor(g.batch(Tensor(flat))).data
    return out.reshape(h, w, len(facts))


# -- theory files and persistence ---------------------------------------------

def theory_text(scenario_id: int, directory: str | os.PathLike | None = None) -> str:
    """Theory source for a scenario: ``scenario<N>.ltn`` from ``directory`` or the bundled set."""
    name = f"scenario{scenario_id}.ltn"
    if directory is not None:
        return Path(directory, name).read_text()
    return resources.files(__package__).joinpath("theories", name).read_text()


def load_theory(scenario_id: int, directory: str | os.PathLike | None = None) -> Theory:
    return parse_theory(theory_text(scenario_id, directory))


def save_groundings(path, theory: Theory, result: TrainResult) -> None:
    payload = {
        "theory": str(theory),
        "trace": result.trace,
        "predicates": {
            name: g.state_dict() for name, g in result.groundings.items() if isinstance(g, Learnable)
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_groundings(path) -> tuple[Theory, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    theory = parse_theory(payload["theory"])
    groundings = make_groundings(theory, np.random.default_rng(0))
    for name, state in payload["predicates"].items():
        groundings[name].load_state_dict(state)
    return theory, groundings
