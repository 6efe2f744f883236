"""Single-variable fuzzy first-order logic with trainable predicate groundings."""

from .logic import (
    CANONICAL_SAMPLES,
    FACT_PREDICATES,
    TYPE_CHANNELS,
    Defined,
    Known,
    Learnable,
    TrainResult,
    cell_samples,
    derive_fact_maps,
    eval_formula,
    formula_truth,
    known_groundings,
    learnable_parameters,
    load_groundings,
    load_theory,
    make_groundings,
    satisfaction,
    satisfaction_tensor,
    save_groundings,
    t_and,
    t_iff,
    t_implies,
    t_not,
    t_or,
    theory_text,
    train_groundings,
)
from .parser import KNOWN_PREDICATES, And, Atom, Iff, Implies, Not, Or, Theory, TheoryError, parse_formula, parse_theory
