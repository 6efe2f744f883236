"""Input assembly, experiment schedules, evaluation and reporting."""

from .evaluation import (
    EvalResult,
    InvariantViolation,
    agent_policy,
    evaluate,
    evaluate_agent,
    mean_ci,
    oracle_policy,
    random_policy,
    run_episodes,
)
from .experiment import (
    EXPERIMENT_CYCLES,
    EvalRecord,
    ExperimentPlan,
    Phase,
    SeedResult,
    make_plan,
    records_of,
    run_experiment,
    run_seed,
)
from .pipeline import CONDITIONS, PackedInput, PriorPipeline, build_input, channels
from .report import CSV_FIELDS, emit_csv, emit_svg, parse_csv
from .config import ConfigError, load_config, parse_config
