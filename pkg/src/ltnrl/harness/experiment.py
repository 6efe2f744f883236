"""Phase schedules for the two transfer experiments and the training loop that runs them."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .. import gridworld as gw
from ..agent import AgentConfig, DQNAgent, EpsilonSchedule, Transition, epsilon_value, select_action
from ..ltn import load_theory, train_groundings
from .evaluation import InvariantViolation, agent_policy, evaluate
from .pipeline import PackedInput, PriorPipeline, channels

log = logging.getLogger(__name__)

# full-scale cadence that desk-scale plans are compared against in metadata
REFERENCE_EVAL_EVERY = 200_000
REFERENCE_PHASE_EPOCHS = 50


@dataclass(frozen=True)
class Phase:
    scenario: int
    setting: int
    steps: int

    def __post_init__(self):
        if self.scenario not in gw.SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario}")
        if self.setting not in gw.SETTINGS:
            raise ValueError(f"unknown setting {self.setting}")
        if self.steps <= 0:
            raise ValueError("phase duration must be positive")


@dataclass
class ExperimentPlan:
    experiment: int
    phases: list
    condition: str = "none"
    epsilon_policy: str = "hold"
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eval_every: int = 2000
    eval_trajectories: int = 50
    eval_epsilon: float = 0.05
    eval_at_start: bool = False
    ltn_iterations: int = 2000
    ltn_lr: float = 0.01
    theory_dir: Optional[str] = None
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        if self.experiment not in (1, 2):
            raise ValueError("experiment must be 1 or 2")
        if not self.phases:
            raise ValueError("a plan needs at least one phase")
        channels(self.condition)
        EpsilonSchedule(policy=self.epsilon_policy)
        if self.eval_every <= 0 or self.eval_trajectories <= 0:
            raise ValueError("evaluation period and trajectory count must be positive")

    @property
    def total_steps(self) -> int:
        return sum(p.steps for p in self.phases)

    def schedule(self) -> EpsilonSchedule:
        a = self.agent
        return EpsilonSchedule(a.epsilon_start, a.epsilon_end, a.epsilon_horizon, self.epsilon_policy)

    def metadata(self) -> dict:
        phase_steps = [p.steps for p in self.phases]
        return {
            "experiment": self.experiment,
            "condition": self.condition,
            "epsilon_policy": self.epsilon_policy,
            "seeds": list(self.seeds),
            "phases": [asdict(p) for p in self.phases],
            "eval_every": self.eval_every,
            "eval_trajectories": self.eval_trajectories,
            "eval_epsilon": self.eval_epsilon,
            "ltn_iterations": self.ltn_iterations,
            "agent": asdict(self.agent),
            "scale": {
                "eval_every_vs_reference": self.eval_every / REFERENCE_EVAL_EVERY,
                "phase_epochs": [s / self.eval_every for s in phase_steps],
                "phase_epochs_vs_reference": [s / self.eval_every / REFERENCE_PHASE_EPOCHS for s in phase_steps],
            },
        }


EXPERIMENT_CYCLES = {
    # experiment I: colour settings under scenario 1; experiment II: scenarios under setting 1
    1: [(1, 1), (1, 3), (1, 2), (1, 4)],
    2: [(1, 1), (2, 1), (3, 1), (4, 1)],
}


def make_plan(experiment: int, condition: str = "none", epsilon_policy: str = "hold", n_seeds: int = 5,
              phase_steps: int = 40_000, eval_every: int = 2000, n_phases: int = 4,
              cycle: Optional[Sequence[tuple[int, int]]] = None, **overrides) -> ExperimentPlan:
    """Desk-scale plan; ``cycle`` lists (scenario, setting) pairs visited in order and repeated."""
    if cycle is None and experiment not in EXPERIMENT_CYCLES:
        raise ValueError("experiment must be 1 or 2")
    cycle = list(cycle or EXPERIMENT_CYCLES[experiment])
    phases = [Phase(*cycle[i % len(cycle)], phase_steps) for i in range(n_phases)]
    return ExperimentPlan(experiment=experiment, phases=phases, condition=condition,
                          epsilon_policy=epsilon_policy, seeds=list(range(n_seeds)),
                          eval_every=eval_every, **overrides)


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    epoch: int
    phase: int
    condition: str
    epsilon_policy: str
    normalized_reward_mean: float
    ci95: float


@dataclass
class SeedResult:
    seed: int
    records: list
    grounding_retrains: int = 0
    losses: list = field(default_factory=list)
    checkpoint: Optional[str] = None


def _streams(seed: int) -> dict:
    names = ("agent", "env", "act", "ltn")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


def run_seed(plan: ExperimentPlan, seed: int, checkpoint_dir: Optional[str] = None) -> SeedResult:
    """Train one fresh agent through every phase of ``plan``."""
    ss = _streams(seed)
    agent_seed = int(ss["agent"].generate_state(1)[0])
    agent = DQNAgent(channels(plan.condition), plan.agent, seed=agent_seed)
    env_rng = np.random.default_rng(ss["env"])
    act_rng = np.random.default_rng(ss["act"])
    ltn_seeds = ss["ltn"].generate_state(len(plan.phases))
    schedule = plan.schedule()
    cfg = plan.agent
    result = SeedResult(seed, [])
    t = 0
    epoch = 0

    def record(phase_idx: int, phase: Phase, pipeline: PriorPipeline):
        eval_rng = np.random.default_rng([seed, epoch, 7919])
        scenario = gw.SCENARIOS[phase.scenario]
        res = evaluate(agent_policy(agent, pipeline, plan.eval_epsilon), scenario, plan.eval_trajectories, eval_rng)
        rec = EvalRecord(seed, epoch, phase_idx, plan.condition, plan.epsilon_policy, res.mean, res.ci95)
        result.records.append(rec)
        log.info("seed %d epoch %d phase %d: %.3f +- %.3f", seed, epoch, phase_idx, res.mean, res.ci95)

    for phase_idx, phase in enumerate(plan.phases):
        scenario = gw.SCENARIOS[phase.scenario]
        setting = gw.SETTINGS[phase.setting]
        groundings = None
        if plan.condition == "types_facts":
            trained = train_groundings(load_theory(phase.scenario, plan.theory_dir), iterations=plan.ltn_iterations,
                                       lr=plan.ltn_lr, seed=int(ltn_seeds[phase_idx]))
            groundings = trained.groundings
            result.grounding_retrains += 1
        pipeline = PriorPipeline(plan.condition, setting, groundings)
        phase_start = t
        if phase_idx == 0 and plan.eval_at_start:
            record(phase_idx, phase, pipeline)

        state = gw.reset(env_rng, scenario)
        packed = pipeline.pack(state)
        for _ in range(phase.steps):
            eps = epsilon_value(schedule, t, phase_start)
            action = select_action(agent.q_values(PackedInput.stack([packed]))[0], eps, act_rng)
            res = gw.step(state, action, scenario)
            if res.reward not in (-1, 0, 1):
                raise InvariantViolation(f"reward {res.reward} outside {{-1, 0, 1}}")
            next_packed = pipeline.pack(res.state)
            agent.remember(Transition(packed, action, res.reward, next_packed, res.done))
            t += 1
            if res.done:
                state = gw.reset(env_rng, scenario)
                packed = pipeline.pack(state)
            else:
                state, packed = res.state, next_packed

            if t % cfg.train_every == 0:
                for _ in range(cfg.updates_per_train):
                    loss = agent.train_step()
                    if loss is None:
                        break
                    result.losses.append(loss)
            if t % plan.eval_every == 0:
                epoch += 1
                record(phase_idx, phase, pipeline)

    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
        path = os.path.join(checkpoint_dir, f"agent_{plan.condition}_seed{seed}.ckpt")
        agent.save(path)
        result.checkpoint = path
    return result


def run_experiment(plan: ExperimentPlan, workers: int = 1, checkpoint_dir: Optional[str] = None) -> list:
    """Run every seed of ``plan``; seeds are independent and may run in separate processes."""
    if workers > 1 and len(plan.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_seed, [plan] * len(plan.seeds), plan.seeds,
                                    [checkpoint_dir] * len(plan.seeds)))
    else:
        results = [run_seed(plan, s, checkpoint_dir) for s in plan.seeds]
    return results


def records_of(results: Sequence[SeedResult]) -> list:
    return [r for res in results for r in res.records]


def with_condition(plan: ExperimentPlan, condition: str) -> ExperimentPlan:
    return replace(plan, condition=condition)
