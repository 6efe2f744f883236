import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltnrl import gridworld as gw
from ltnrl import perception
from ltnrl.ltn import (
    And,
    Atom,
    Defined,
    Iff,
    Implies,
    Known,
    Learnable,
    Not,
    Or,
    TheoryError,
    derive_fact_maps,
    eval_formula,
    known_groundings,
    load_groundings,
    load_theory,
    make_groundings,
    parse_formula,
    parse_theory,
    satisfaction,
    satisfaction_tensor,
    save_groundings,
    t_and,
    t_iff,
    t_implies,
    t_not,
    t_or,
    train_groundings,
)
from ltnrl.numcore import gradient_check

GRID = [Fraction(i, 10) for i in range(11)]
X = "x"
ONE_HOT = np.eye(4)


def atom(p):
    return Atom(p, X)


# -- parser ----------------------------------------------------------------------

def test_parse_biconditional():
    th = parse_theory("forall x: circle(x) <-> goto(x)", learnable=["goto"])
    assert th.axioms == [Iff(atom("circle"), atom("goto"))]
    assert th.variable == "x"
    assert th.learnable == ("goto",) or list(th.learnable) == ["goto"]


def test_parse_header_declares_learnable():
    th = parse_theory("learnable goto\nforall x: circle(x) <-> goto(x)")
    assert th.axioms == [Iff(atom("circle"), atom("goto"))]


def test_parse_disjunction_under_iff():
    f = parse_formula("(square(x) | circle(x)) <-> avoid(x)")
    assert f == Iff(Or(atom("square"), atom("circle")), atom("avoid"))


def test_unclosed_paren_reports_position():
    with pytest.raises(TheoryError) as exc:
        parse_theory("learnable goto\nforall x: circle(x")
    assert exc.value.line == 2
    assert exc.value.column == len("forall x: circle(x") + 1


def test_undeclared_predicate_rejected():
    with pytest.raises(TheoryError, match="triangle"):
        parse_theory("forall x: triangle(x) <-> circle(x)")


def test_multiple_variables_rejected():
    with pytest.raises(TheoryError, match="variable"):
        parse_theory("learnable goto\nforall x: circle(y) <-> goto(x)")
    with pytest.raises(TheoryError, match="variable"):
        parse_theory("learnable goto\nforall x: circle(x) <-> goto(x)\nforall y: goto(y)")


def test_known_cannot_be_learnable_and_theory_needs_axioms():
    with pytest.raises(TheoryError):
        parse_theory("learnable circle\nforall x: circle(x)")
    with pytest.raises(TheoryError):
        parse_theory("learnable goto\n# nothing else")


def test_precedence_and_associativity():
    assert parse_formula("a(x) | b(x) & c(x)") == Or(atom("a"), And(atom("b"), atom("c")))
    assert parse_formula("~a(x) & b(x)") == And(Not(atom("a")), atom("b"))
    assert parse_formula("a(x) -> b(x) -> c(x)") == Implies(atom("a"), Implies(atom("b"), atom("c")))
    assert parse_formula("a(x) <-> b(x) <-> c(x)") == Iff(Iff(atom("a"), atom("b")), atom("c"))
    assert parse_formula("a(x) & b(x) & c(x)") == And(And(atom("a"), atom("b")), atom("c"))
    assert parse_formula("a(x) -> b(x) <-> c(x)") == Iff(Implies(atom("a"), atom("b")), atom("c"))


def test_comments_and_whitespace():
    th = parse_theory("# header\nlearnable goto  # inline\n\n  forall x :\n circle(x)\n <-> goto(x)\n")
    assert th.axioms == [Iff(atom("circle"), atom("goto"))]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_shipped_theories_roundtrip(n):
    th = load_theory(n)
    assert set(th.learnable) == {"goto", "avoid"}
    assert len(th.axioms) == 2
    again = parse_theory(str(th))
    assert again.axioms == th.axioms and set(again.learnable) == set(th.learnable)


def test_scenario_theories_match_reward_tables():
    s1 = load_theory(1)
    assert s1.axioms == [Iff(atom("circle"), atom("goto")), Iff(atom("cross"), atom("avoid"))]
    s4 = load_theory(4)
    assert s4.axioms[1] == Iff(Or(atom("square"), atom("circle")), atom("avoid"))


def test_theory_dir_override(tmp_path):
    (tmp_path / "scenario1.ltn").write_text("learnable goto\nforall x: square(x) <-> goto(x)\n")
    th = load_theory(1, tmp_path)
    assert th.axioms == [Iff(atom("square"), atom("goto"))]


# -- connectives -------------------------------------------------------------------

def test_connective_examples():
    assert t_and(Fraction(6, 10), Fraction(7, 10)) == Fraction(3, 10)
    assert t_iff(Fraction(8, 10), Fraction(3, 10)) == Fraction(5, 10)
    assert t_and(0.6, 0.7) == pytest.approx(0.3)
    assert t_iff(0.8, 0.3) == pytest.approx(0.5)
    assert t_or(Fraction(6, 10), Fraction(7, 10)) == 1
    assert t_implies(Fraction(7, 10), Fraction(2, 10)) == Fraction(5, 10)


def test_connective_definitions_on_grid():
    for a, b in itertools.product(GRID, GRID):
        assert t_not(a) == 1 - a
        assert t_and(a, b) == max(0, a + b - 1)
        assert t_or(a, b) == min(1, a + b)
        assert t_implies(a, b) == min(1, 1 - a + b)
        assert t_iff(a, b) == min(min(1, 1 - a + b), min(1, 1 - b + a))


def test_algebra_laws_exact_on_grid():
    for a in GRID:
        assert t_not(t_not(a)) == a
        assert t_and(a, 1) == a
        assert t_or(a, 0) == a
        assert t_iff(a, a) == 1
    for a, b in itertools.product(GRID, GRID):
        assert t_and(a, b) == t_and(b, a)
        assert t_or(a, b) == t_or(b, a)
        assert t_implies(a, b) == t_or(t_not(a), b)


def test_connectives_vectorised_agree_with_scalar():
    a, b = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    for fn in (t_and, t_or, t_implies, t_iff):
        vec = fn(a, b)
        ref = np.vectorize(lambda u, v: float(fn(Fraction(u).limit_denominator(10), Fraction(v).limit_denominator(10))))(a, b)
        np.testing.assert_allclose(vec, ref, atol=1e-12)


formulas = st.recursive(
    st.sampled_from(["circle", "square", "cross", "agent"]).map(atom),
    lambda kids: st.one_of(
        kids.map(Not),
        st.tuples(kids, kids).map(lambda t: And(*t)),
        st.tuples(kids, kids).map(lambda t: Or(*t)),
        st.tuples(kids, kids).map(lambda t: Implies(*t)),
        st.tuples(kids, kids).map(lambda t: Iff(*t)),
    ),
    max_leaves=12,
)


@settings(max_examples=200, deadline=None)
@given(f=formulas, x=st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_eval_stays_in_unit_interval(f, x):
    v = eval_formula(f, known_groundings(), np.array(x))
    assert 0.0 <= v <= 1.0


@settings(max_examples=100, deadline=None)
@given(f=formulas)
def test_formula_str_roundtrip(f):
    assert parse_formula(str(f)) == f


# -- satisfaction -------------------------------------------------------------------

def analytic_groundings(n):
    th = load_theory(n)
    base = known_groundings()
    defined = {}
    for ax in th.axioms:
        # every shipped axiom is  <type formula> <-> fact(x)
        defined[ax.right.predicate] = Defined(ax.left, base)
    return th, {**base, **defined}


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_analytic_groundings_fully_satisfy(n):
    th, g = analytic_groundings(n)
    rng = np.random.default_rng(n)
    samples = np.vstack([np.eye(4), np.zeros((1, 4)), rng.random((50, 4))])
    if n != 4:
        assert satisfaction(th, g, samples) == 1.0
    else:
        # the disjunction saturates at 1, so both sides always agree exactly
        assert satisfaction(th, g, samples) == pytest.approx(1.0, abs=1e-15)


def test_inverted_goto_is_poorly_satisfied():
    th = parse_theory("learnable goto\nforall x: circle(x) <-> goto(x)")
    g = {**known_groundings(), "goto": Defined(Not(atom("circle")), known_groundings())}
    assert satisfaction(th, g, ONE_HOT) < 0.5


def test_single_sample_single_axiom_is_eval():
    th = parse_theory("learnable goto\nforall x: circle(x) -> cross(x)")
    x = np.array([0.7, 0.0, 0.4, 0.1])
    assert satisfaction(th, known_groundings(), x[None]) == pytest.approx(
        eval_formula(th.axioms[0], known_groundings(), x))


def test_empty_samples_rejected():
    th, g = analytic_groundings(1)
    with pytest.raises(ValueError):
        satisfaction(th, g, np.zeros((0, 4)))


def test_no_learnable_rejected():
    th = parse_theory("forall x: circle(x) -> ~cross(x)")
    with pytest.raises(ValueError, match="learnable"):
        train_groundings(th, iterations=1)


@pytest.mark.parametrize("seed", range(5))
def test_satisfaction_gradient_matches_finite_differences(seed):
    th = load_theory(4)
    rng = np.random.default_rng(seed)
    g = make_groundings(th, rng)
    # keep truth values off the piecewise-linear kinks
    samples = np.clip(rng.random((12, 4)), 0.05, 0.95)
    params = [p for name in ("goto", "avoid") for p in g[name].parameters()]
    err = gradient_check(lambda: 1.0 - satisfaction_tensor(th, g, samples), params)
    assert err <= 1e-4


# -- training --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained1():
    return train_groundings(load_theory(1), iterations=2000, seed=0)


@pytest.fixture(scope="module")
def trained4():
    return train_groundings(load_theory(4), iterations=2000, seed=0)


def test_scenario1_training_converges(trained1):
    assert trained1.final >= 0.95
    assert len(trained1.trace) == 2001
    goto = trained1.groundings["goto"]
    avoid = trained1.groundings["avoid"]
    assert goto(ONE_HOT[0])[0] >= 0.9
    assert goto(ONE_HOT[2])[0] <= 0.1
    assert avoid(ONE_HOT[2])[0] >= 0.9
    assert avoid(ONE_HOT[0])[0] <= 0.1


def test_scenario4_disjunction_learned(trained4):
    avoid = trained4.groundings["avoid"]
    assert avoid(ONE_HOT[1])[0] >= 0.9
    assert avoid(ONE_HOT[0])[0] >= 0.9
    assert avoid(ONE_HOT[2])[0] <= 0.1


def test_fact_maps_mark_circles(trained1):
    s = gw.from_text("""
        .....
        .o...
        ..+..
        ....o
        .....""")
    for setting in gw.SETTINGS.values():
        maps = perception.build_object_maps(gw.render(s, setting))
        facts = derive_fact_maps(maps, trained1.groundings)
        assert facts.shape == (5, 5, 2)
        goto = facts[..., 0]
        marked = np.zeros((5, 5), bool)
        marked[1, 1] = marked[3, 4] = True
        assert goto[marked].min() >= 0.9
        assert goto[~marked].max() <= 0.1


def test_fact_maps_empty_grid(trained1):
    facts = derive_fact_maps(np.zeros((5, 5, 4)), trained1.groundings)
    assert facts.shape == (5, 5, 2)
    assert facts.max() <= 0.1


def test_untrained_groundings_rejected():
    th = load_theory(1)
    g = make_groundings(th, np.random.default_rng(0))
    with pytest.raises(ValueError, match="trained"):
        derive_fact_maps(np.zeros((5, 5, 4)), g)


def test_learnable_output_open_interval():
    g = Learnable(np.random.default_rng(0))
    out = g(np.random.default_rng(1).random((100, 4)) * 10 - 5)
    assert np.all((out > 0) & (out < 1))
    assert Known(2).scalar(np.array([0.1, 0.2, 0.3, 0.4])) == 0.3


def test_groundings_persist(tmp_path, trained1):
    path = tmp_path / "g.json"
    save_groundings(path, load_theory(1), trained1)
    th, g = load_groundings(path)
    assert th.axioms == load_theory(1).axioms
    x = np.random.default_rng(0).random((10, 4))
    np.testing.assert_array_equal(g["goto"](x), trained1.groundings["goto"](x))
    assert g["goto"].trained
