"""Recursive-descent parser for single-variable fuzzy first-order axioms.

Grammar::

    theory   = { "learnable" IDENT } { axiom } ;
    axiom    = "forall" IDENT ":" formula ;
    formula  = iff ;
    iff      = imp { "<->" imp } ;
    imp      = or { "->" or } ;
    or       = and { "|" and } ;
    and      = unary { "&" unary } ;
    unary    = "~" unary | atom ;
    atom     = IDENT "(" IDENT ")" | "(" formula ")" ;

``#`` starts a comment that runs to the end of the line. ``<->``, ``|`` and
``&`` associate to the left; ``->`` associates to the right.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

KNOWN_PREDICATES = ("circle", "square", "cross", "agent")
KEYWORDS = {"forall", "learnable"}


class TheoryError(ValueError):
    """Syntax or declaration error, located by 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Atom:
    predicate: str
    variable: str

    def __str__(self):
        return f"{self.predicate}({self.variable})"


@dataclass(frozen=True)
class Not:
    operand: "Formula"

    def __str__(self):
        return f"~{self.operand}"


@dataclass(frozen=True)
class Binary:
    left: "Formula"
    right: "Formula"
    symbol = "?"

    def __str__(self):
        return f"({self.left} {self.symbol} {self.right})"


@dataclass(frozen=True)
class And(Binary):
    symbol = "&"


@dataclass(frozen=True)
class Or(Binary):
    symbol = "|"


@dataclass(frozen=True)
class Implies(Binary):
    symbol = "->"


@dataclass(frozen=True)
class Iff(Binary):
    symbol = "<->"


Formula = Union[Atom, Not, And, Or, Implies, Iff]


def atoms(formula: Formula) -> Iterator[Atom]:
    if isinstance(formula, Atom):
        yield formula
    elif isinstance(formula, Not):
        yield from atoms(formula.operand)
    else:
        yield from atoms(formula.left)
        yield from atoms(formula.right)


@dataclass
class Theory:
    variable: str
    axioms: list = field(default_factory=list)
    learnable: tuple = ()
    known: tuple = KNOWN_PREDICATES

    def predicates(self) -> set[str]:
        return {a.predicate for ax in self.axioms for a in atoms(ax)}

    def __str__(self):
        head = [f"learnable {name}" for name in self.learnable]
        body = [f"forall {self.variable}: {ax}" for ax in self.axioms]
        return "\n".join(head + body)


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<iff><->)|(?P<imp>->)|(?P<op>[~&|():])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "keyword", a punctuation string, or "eof"
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise TheoryError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("keyword" if word in KEYWORDS else "ident", word, line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(m.group(), m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.variable: str | None = None

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: Token | None = None) -> TheoryError:
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return TheoryError(f"{message}, found {found}", tok.line, tok.column)

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(f"expected {what or repr(kind)}")
        self.pos += 1
        return tok

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        tok = self.peek()
        if tok.kind == kind and (text is None or tok.text == text):
            self.pos += 1
            return tok
        return None

    def bind_variable(self, tok: Token) -> None:
        if self.variable is None:
            self.variable = tok.text
        elif tok.text != self.variable:
            raise TheoryError(
                f"theory uses variable {self.variable!r}; a second variable {tok.text!r} is not allowed",
                tok.line, tok.column,
            )

    # theory = { "learnable" IDENT } { axiom }
    def theory(self) -> tuple[list[Token], list[Formula]]:
        declared = []
        while self.accept("keyword", "learnable"):
            declared.append(self.expect("ident", "a predicate name"))
        axioms = []
        while self.peek().kind != "eof":
            if self.peek().text == "learnable":
                raise self.error("learnable declarations must precede the axioms")
            axioms.append(self.axiom())
        return declared, axioms

    def axiom(self) -> Formula:
        if not self.accept("keyword", "forall"):
            raise self.error("expected 'forall'")
        self.bind_variable(self.expect("ident", "a variable name"))
        self.expect(":", "':'")
        return self.formula()

    def formula(self) -> Formula:
        left = self.implication()
        while self.accept("<->"):
            left = Iff(left, self.implication())
        return left

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.accept("|"):
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        while self.accept("&"):
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        if self.accept("~"):
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Formula:
        if self.accept("("):
            inner = self.formula()
            self.expect(")", "')'")
            return inner
        name = self.expect("ident", "a predicate or '('")
        self.expect("(", "'('")
        var = self.expect("ident", "a variable name")
        self.bind_variable(var)
        self.expect(")", "')'")
        return _LocatedAtom(name.text, var.text, name.line, name.column)


@dataclass(frozen=True)
class _LocatedAtom(Atom):
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


def _strip(formula: Formula) -> Formula:
    if isinstance(formula, Atom):
        return Atom(formula.predicate, formula.variable)
    if isinstance(formula, Not):
        return Not(_strip(formula.operand))
    return type(formula)(_strip(formula.left), _strip(formula.right))


def parse_formula(text: str) -> Formula:
    """Parse a bare formula (no quantifier, no declaration checks)."""
    p = _Parser(text)
    f = p.formula()
    if p.peek().kind != "eof":
        raise p.error("unexpected trailing input")
    return _strip(f)


def parse_theory(text: str, known: Iterable[str] = KNOWN_PREDICATES, learnable: Iterable[str] = ()) -> Theory:
    """Parse axiom DSL text into a :class:`Theory`.

    Predicates must be either ``known`` (grounded in object-map channels) or
    declared learnable, in the text header or through ``learnable``.
    """
    p = _Parser(text)
    declared_tokens, axioms = p.theory()
    known = tuple(known)
    names = list(learnable)
    for tok in declared_tokens:
        if tok.text in known:
            raise TheoryError(f"{tok.text!r} is a known type predicate and cannot be learnable", tok.line, tok.column)
        if tok.text not in names:
            names.append(tok.text)
    if not axioms:
        raise p.error("expected at least one axiom")
    for ax in axioms:
        for a in atoms(ax):
            if a.predicate not in known and a.predicate not in names:
                raise TheoryError(f"undeclared predicate {a.predicate!r}", a.line, a.column)
    return Theory(variable=p.variable, axioms=[_strip(ax) for ax in axioms], learnable=tuple(names), known=known)
