"""LTL formulas: AST, parser, printer, positive normal form and lasso semantics.

Concrete syntax::

    true  false  a  !f  X f  <>f  []f  f & g  f | g  f -> g  f U g  ( f )

``F``/``G`` are accepted as aliases of ``<>``/``[]``. Proposition names start with a
lower-case letter. Precedence, tightest first: unary operators, ``U`` (right
associative), ``&``, ``|``, ``->`` (right associative).

Parsed formulas use only the core constructors ``TrueConst``, ``Prop``, ``Not``,
``And``, ``Next`` and ``Until``; derived operators are expanded on the way in and
recovered by ``print_ltl``. ``FalseConst``, ``Or`` and ``Release`` appear only in
positive normal form.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from lark import Lark, Token, Transformer
from lark.exceptions import UnexpectedEOF, UnexpectedInput

from .errors import LtlSyntaxError, UnknownPropositionError


@dataclass(frozen=True)
class Ltl:
    pass


@dataclass(frozen=True)
class TrueConst(Ltl):
    pass


@dataclass(frozen=True)
class FalseConst(Ltl):
    pass


@dataclass(frozen=True)
class Prop(Ltl):
    name: str


@dataclass(frozen=True)
class Not(Ltl):
    operand: Ltl


@dataclass(frozen=True)
class Next(Ltl):
    operand: Ltl


@dataclass(frozen=True)
class And(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Or(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Until(Ltl):
    left: Ltl
    right: Ltl


@dataclass(frozen=True)
class Release(Ltl):
    left: Ltl
    right: Ltl


TRUE = TrueConst()
FALSE_CORE = Not(TRUE)


def disjunction(left: Ltl, right: Ltl) -> Ltl:
    return Not(And(Not(left), Not(right)))


def implication(left: Ltl, right: Ltl) -> Ltl:
    return Not(And(left, Not(right)))


def eventually(operand: Ltl) -> Ltl:
    return Until(TRUE, operand)


def always(operand: Ltl) -> Ltl:
    return Not(Until(TRUE, Not(operand)))


# Parser

LTL_GRAMMAR = r"""
    ?formula: implies

    ?implies: disj "->" implies       -> implies
            | disj

    ?disj: disj "|" conj               -> or_
         | conj

    ?conj: conj "&" until              -> and_
         | until

    ?until: unary "U" until            -> until
          | unary

    ?unary: "!" unary                  -> not_
          | "X" unary                  -> next_
          | ("<>" | "F") unary         -> eventually
          | ("[]" | "G") unary         -> always
          | atom

    ?atom: "true"                      -> true
         | "false"                     -> false
         | PROP                        -> prop
         | "(" implies ")"

    PROP: /[a-z_][a-zA-Z0-9_]*/

    %import common.WS
    %ignore WS
"""

_PARSER = Lark(LTL_GRAMMAR, start="formula", parser="lalr")


class _ToLtl(Transformer):
    def true(self, _):
        return TRUE

    def false(self, _):
        return FALSE_CORE

    def prop(self, children):
        return Prop(str(children[0]))

    def not_(self, children):
        return Not(children[0])

    def next_(self, children):
        return Next(children[0])

    def eventually(self, children):
        return eventually(children[0])

    def always(self, children):
        return always(children[0])

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return disjunction(children[0], children[1])

    def implies(self, children):
        return implication(children[0], children[1])

    def until(self, children):
        return Until(children[0], children[1])


def parse_ltl(text: str, alphabet: Optional[Iterable[str]] = None) -> Ltl:
    """Parse an LTL formula.

    Args:
        text: Formula in the concrete syntax above
        alphabet: Allowed proposition names; ``None`` accepts any name

    Returns:
        Formula over the core constructors

    Raises:
        LtlSyntaxError: If the text does not parse (``position`` is the offending offset)
        UnknownPropositionError: If a proposition is not in ``alphabet``
    """
    try:
        tree = _PARSER.parse(text)
    except UnexpectedEOF:
        raise LtlSyntaxError("unexpected end of formula", len(text)) from None
    except UnexpectedInput as exc:
        position = exc.pos_in_stream if exc.pos_in_stream is not None and exc.pos_in_stream >= 0 else len(text)
        snippet = text[position:position + 10] or "end of formula"
        raise LtlSyntaxError(f"unexpected input {snippet!r}", position) from None

    if alphabet is not None:
        allowed = set(alphabet)
        for token in tree.scan_values(lambda v: isinstance(v, Token) and v.type == "PROP"):
            if str(token) not in allowed:
                raise UnknownPropositionError(str(token), token.start_pos)

    if isinstance(tree, Token):
        return Prop(str(tree))
    return _ToLtl().transform(tree)


def propositions(formula: Ltl) -> frozenset[str]:
    """Proposition names occurring in a formula."""
    if isinstance(formula, Prop):
        return frozenset({formula.name})
    if isinstance(formula, (Not, Next)):
        return propositions(formula.operand)
    if isinstance(formula, (And, Or, Until, Release)):
        return propositions(formula.left) | propositions(formula.right)
    return frozenset()


# Printer

_IMPLIES, _OR, _AND, _UNTIL, _UNARY, _ATOM = range(1, 7)


def _sugar(formula: Ltl) -> tuple[str, tuple[Ltl, ...]]:
    """Recognize derived operators; returns (operator, operands)."""
    if isinstance(formula, Not):
        inner = formula.operand
        if isinstance(inner, TrueConst):
            return "false", ()
        if isinstance(inner, Until) and isinstance(inner.left, TrueConst) and isinstance(inner.right, Not):
            return "[]", (inner.right.operand,)
        if isinstance(inner, And) and isinstance(inner.right, Not):
            if isinstance(inner.left, Not):
                return "|", (inner.left.operand, inner.right.operand)
            return "->", (inner.left, inner.right.operand)
        return "!", (inner,)
    if isinstance(formula, Until) and isinstance(formula.left, TrueConst):
        return "<>", (formula.right,)
    if isinstance(formula, Until):
        return "U", (formula.left, formula.right)
    if isinstance(formula, Release):
        return "R", (formula.left, formula.right)
    if isinstance(formula, And):
        return "&", (formula.left, formula.right)
    if isinstance(formula, Or):
        return "|", (formula.left, formula.right)
    if isinstance(formula, Next):
        return "X", (formula.operand,)
    if isinstance(formula, TrueConst):
        return "true", ()
    if isinstance(formula, FalseConst):
        return "false", ()
    if isinstance(formula, Prop):
        return formula.name, ()
    raise TypeError(f"not an LTL formula: {formula!r}")


_BINARY = {
    "->": (_IMPLIES, "right"),
    "|": (_OR, "left"),
    "&": (_AND, "left"),
    "U": (_UNTIL, "right"),
    "R": (_UNTIL, "right"),
}
_PREFIX = {"!": "!", "X": "X ", "<>": "<>", "[]": "[]"}


def _print(formula: Ltl) -> tuple[str, int]:
    op, operands = _sugar(formula)
    if op in _PREFIX:
        text, level = _print(operands[0])
        if level < _UNARY:
            text = f"({text})"
        return _PREFIX[op] + text, _UNARY
    if op in _BINARY:
        level, assoc = _BINARY[op]
        left, left_level = _print(operands[0])
        right, right_level = _print(operands[1])
        if left_level < level or (left_level == level and assoc == "right"):
            left = f"({left})"
        if right_level < level or (right_level == level and assoc == "left"):
            right = f"({right})"
        return f"{left} {op} {right}", level
    return op, _ATOM


def print_ltl(formula: Ltl) -> str:
    """Render a formula with derived operators recovered and minimal parentheses."""
    return _print(formula)[0]


# Positive normal form

def to_pnf(formula: Ltl) -> Ltl:
    """Push negations down to propositions using the LTL dualities."""
    return _pnf(formula, negate=False)


def _pnf(formula: Ltl, negate: bool) -> Ltl:
    if isinstance(formula, TrueConst):
        return FalseConst() if negate else formula
    if isinstance(formula, FalseConst):
        return TRUE if negate else formula
    if isinstance(formula, Prop):
        return Not(formula) if negate else formula
    if isinstance(formula, Not):
        return _pnf(formula.operand, not negate)
    if isinstance(formula, Next):
        return Next(_pnf(formula.operand, negate))
    left, right = _pnf(formula.left, negate), _pnf(formula.right, negate)
    if isinstance(formula, And):
        return Or(left, right) if negate else And(left, right)
    if isinstance(formula, Or):
        return And(left, right) if negate else Or(left, right)
    if isinstance(formula, Until):
        return Release(left, right) if negate else Until(left, right)
    if isinstance(formula, Release):
        return Until(left, right) if negate else Release(left, right)
    raise TypeError(f"not an LTL formula: {formula!r}")


def is_syntactic_safety(formula: Ltl) -> bool:
    """True iff the positive normal form uses only X and [] as temporal operators."""
    return _only_next_and_always(to_pnf(formula))


def _only_next_and_always(formula: Ltl) -> bool:
    if isinstance(formula, Until):
        return False
    if isinstance(formula, Release):
        return isinstance(formula.left, FalseConst) and _only_next_and_always(formula.right)
    if isinstance(formula, (Not, Next)):
        return _only_next_and_always(formula.operand)
    if isinstance(formula, (And, Or)):
        return _only_next_and_always(formula.left) and _only_next_and_always(formula.right)
    return True


# Semantics

def holds(formula: Ltl, letter: frozenset[str]) -> bool:
    """Evaluate a temporal-operator-free formula on one letter."""
    if isinstance(formula, TrueConst):
        return True
    if isinstance(formula, FalseConst):
        return False
    if isinstance(formula, Prop):
        return formula.name in letter
    if isinstance(formula, Not):
        return not holds(formula.operand, letter)
    if isinstance(formula, And):
        return holds(formula.left, letter) and holds(formula.right, letter)
    if isinstance(formula, Or):
        return holds(formula.left, letter) or holds(formula.right, letter)
    raise TypeError(f"temporal operator in a letter formula: {print_ltl(formula)}")


def evaluate_lasso(
    formula: Ltl,
    prefix: Sequence[Iterable[str]],
    loop: Sequence[Iterable[str]],
) -> bool:
    """Exact satisfaction of a formula on the ultimately periodic word prefix . loop^omega."""
    if not loop:
        raise ValueError("lasso loop must contain at least one letter")
    word = [frozenset(letter) for letter in list(prefix) + list(loop)]
    n = len(word)
    successor = np.arange(1, n + 1)
    successor[-1] = len(prefix)
    return bool(_satisfaction(formula, word, successor)[0])


def _satisfaction(formula: Ltl, word: list[frozenset[str]], successor: np.ndarray) -> np.ndarray:
    n = len(word)
    if isinstance(formula, TrueConst):
        return np.ones(n, dtype=bool)
    if isinstance(formula, FalseConst):
        return np.zeros(n, dtype=bool)
    if isinstance(formula, Prop):
        return np.array([formula.name in letter for letter in word], dtype=bool)
    if isinstance(formula, Not):
        return ~_satisfaction(formula.operand, word, successor)
    if isinstance(formula, Next):
        return _satisfaction(formula.operand, word, successor)[successor]
    left = _satisfaction(formula.left, word, successor)
    right = _satisfaction(formula.right, word, successor)
    if isinstance(formula, And):
        return left & right
    if isinstance(formula, Or):
        return left | right
    if isinstance(formula, Until):
        # least fixpoint of x = right | (left & X x)
        sat = np.zeros(n, dtype=bool)
        for _ in range(n + 1):
            sat = right | (left & sat[successor])
        return sat
    if isinstance(formula, Release):
        # greatest fixpoint of x = right & (left | X x)
        sat = np.ones(n, dtype=bool)
        for _ in range(n + 1):
            sat = right & (left | sat[successor])
        return sat
    raise TypeError(f"not an LTL formula: {formula!r}")
