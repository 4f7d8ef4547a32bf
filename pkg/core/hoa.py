"""Reader and writer for a subset of the HOA v1 automaton format.

Supported: state-based Büchi acceptance (``Acceptance: 1 Inf(0)``, or ``0 t`` for
accept-all), a single initial state, explicit edge labels over AP indices built
from ``t``, ``f``, ``!``, ``&``, ``|`` and parentheses.

ε-edges use the reserved label token ``[eps]``; an ε-edge carries no letter and
must not be combined with other label syntax::

    State: 0
    [t] 0
    [eps] 2

Edge acceptance marks, conjunctive destinations (alternation), state labels and
aliases raise ``UnsupportedHoaFeatureError``. An incomplete automaton is completed
with one implicit rejecting sink, which ``print_hoa`` leaves out.
"""

import json
import logging
from typing import Optional

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedEOF, UnexpectedInput

from .automata import (
    Ldba,
    LdbaEdge,
    complete_with_sink,
    infer_accepting_component,
    validate_suitable,
)
from .config import HOA_EPSILON_TOKEN
from .errors import HoaFormatError, UnsuitableLdbaError, UnsupportedHoaFeatureError
from .ltl import TRUE, And, FalseConst, Ltl, Not, Or, Prop, TrueConst

logger = logging.getLogger(__name__)

HOA_GRAMMAR = r"""
    start: "HOA:" IDENTIFIER header_item* "--BODY--" state* "--END--"

    header_item: HEADER_NAME header_token*
    ?header_token: INT | ESCAPED_STRING | IDENTIFIER | LPAR | RPAR | AMP | BAR | BANG

    state: "State:" state_label? INT ESCAPED_STRING? acc_sig? edge*
    state_label: "[" label_or "]"
    edge: label? target_list acc_sig?
    label: "[" label_or "]"
    target_list: INT (AMP INT)*
    acc_sig: "{" INT* "}"

    ?label_or: label_or BAR label_and   -> lor
             | label_and
    ?label_and: label_and AMP label_not -> land
              | label_not
    ?label_not: BANG label_not          -> lnot
              | label_atom
    ?label_atom: INT                    -> ap_ref
               | IDENTIFIER             -> label_name
               | LPAR label_or RPAR     -> group

    HEADER_NAME.2: /[a-zA-Z_][0-9a-zA-Z_-]*:/
    IDENTIFIER: /[a-zA-Z_@][0-9a-zA-Z_-]*/
    LPAR: "("
    RPAR: ")"
    AMP: "&"
    BAR: "|"
    BANG: "!"
    COMMENT: /\/\*(.|\n)*?\*\//

    %import common.INT
    %import common.ESCAPED_STRING
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_PARSER = Lark(HOA_GRAMMAR, parser="lalr")

_EPSILON = object()
_ACCEPT_BUCHI = ["1", "Inf", "(", "0", ")"]
_ACCEPT_ALL = ["0", "t"]


def _error_at(message: str, token: Token) -> HoaFormatError:
    return HoaFormatError(message, getattr(token, "line", None), getattr(token, "column", None))


def _unquote(token: Token) -> str:
    return json.loads(str(token))


def _label(tree, atomic_props: tuple[str, ...]):
    """Convert a label expression; returns an Ltl formula or the ε marker."""
    if isinstance(tree, Token):
        raise _error_at(f"unexpected token {str(tree)!r} in label", tree)
    if tree.data == "ap_ref":
        token = tree.children[0]
        index = int(token)
        if index >= len(atomic_props):
            raise _error_at(f"AP index {index} out of range ({len(atomic_props)} declared)", token)
        return Prop(atomic_props[index])
    if tree.data == "label_name":
        token = tree.children[0]
        name = str(token)
        if name == "t":
            return TRUE
        if name == "f":
            return FalseConst()
        if name == HOA_EPSILON_TOKEN:
            return _EPSILON
        if name.startswith("@"):
            raise UnsupportedHoaFeatureError(f"alias {name}")
        raise _error_at(f"unknown label name {name!r}", token)
    if tree.data == "group":
        return _label(tree.children[1], atomic_props)
    if tree.data == "lnot":
        operands = [_label(tree.children[1], atomic_props)]
    else:
        operands = [_label(tree.children[0], atomic_props), _label(tree.children[2], atomic_props)]
    if any(op is _EPSILON for op in operands):
        raise _error_at(f"'{HOA_EPSILON_TOKEN}' must be the whole label", tree.children[0 if tree.data == "lnot" else 1])
    if tree.data == "lnot":
        return Not(operands[0])
    if tree.data == "land":
        return And(operands[0], operands[1])
    return Or(operands[0], operands[1])


def parse_hoa(text: str) -> Ldba:
    """Parse HOA text into a suitable LDBA.

    Raises:
        HoaFormatError: Malformed input, tagged with line and column
        UnsupportedHoaFeatureError: Valid HOA outside the supported subset
        UnsuitableLdbaError: The automaton is not a suitable LDBA
    """
    try:
        tree = _PARSER.parse(text)
    except UnexpectedEOF:
        lines = text.splitlines() or [""]
        raise HoaFormatError("unexpected end of input", len(lines), len(lines[-1]) + 1) from None
    except UnexpectedInput as exc:
        raise HoaFormatError("syntax error", exc.line, exc.column) from None

    version = tree.children[0]
    if str(version) != "v1":
        raise UnsupportedHoaFeatureError(f"HOA version {version}")

    headers = [child for child in tree.children if isinstance(child, Tree) and child.data == "header_item"]
    states = [child for child in tree.children if isinstance(child, Tree) and child.data == "state"]

    num_states: Optional[int] = None
    initial: Optional[int] = None
    start_token: Optional[Token] = None
    atomic_props: tuple[str, ...] = ()
    acceptance: Optional[list[str]] = None
    name = ""
    for item in headers:
        key_token, values = item.children[0], item.children[1:]
        key = str(key_token)[:-1]
        words = [str(v) for v in values]
        if key == "States":
            num_states = int(words[0])
        elif key == "Start":
            if initial is not None:
                raise UnsupportedHoaFeatureError("multiple initial states")
            if len(words) != 1:
                raise UnsupportedHoaFeatureError("alternation (conjunctive initial states)")
            initial = int(words[0])
            start_token = values[0]
        elif key == "AP":
            count = int(words[0])
            atomic_props = tuple(_unquote(v) for v in values[1:])
            if len(atomic_props) != count:
                raise _error_at(f"AP declares {count} propositions but lists {len(atomic_props)}", key_token)
        elif key == "Acceptance":
            acceptance = words
            if words not in (_ACCEPT_BUCHI, _ACCEPT_ALL):
                raise UnsupportedHoaFeatureError(f"acceptance condition '{' '.join(words)}'")
        elif key == "name" and values:
            name = _unquote(values[0])
        elif key == "Alias":
            raise UnsupportedHoaFeatureError("aliases")

    if initial is None:
        raise HoaFormatError("missing Start header", 1, 1)
    if acceptance is None:
        raise HoaFormatError("missing Acceptance header", 1, 1)

    declared: dict[int, tuple[str, list[LdbaEdge], bool]] = {}
    for state in states:
        parts = list(state.children)
        if parts and isinstance(parts[0], Tree) and parts[0].data == "state_label":
            raise UnsupportedHoaFeatureError("state labels")
        id_token = parts.pop(0)
        index = int(id_token)
        if index in declared:
            raise _error_at(f"state {index} declared twice", id_token)
        if num_states is not None and index >= num_states:
            raise _error_at(f"state {index} exceeds the declared {num_states} states", id_token)
        state_name = ""
        if parts and isinstance(parts[0], Token) and parts[0].type == "ESCAPED_STRING":
            state_name = _unquote(parts.pop(0))
        accepting = acceptance == _ACCEPT_ALL
        if parts and isinstance(parts[0], Tree) and parts[0].data == "acc_sig":
            for mark in parts.pop(0).children:
                if int(mark) != 0 or acceptance == _ACCEPT_ALL:
                    raise _error_at(f"acceptance set {mark} is not declared", mark)
                accepting = True
        edges = []
        for edge_tree in parts:
            edge, target_token = _edge(edge_tree, atomic_props)
            if num_states is not None and edge.target >= num_states:
                raise _error_at(f"state {index}: edge target {edge.target} out of range", target_token)
            edges.append(edge)
        declared[index] = (state_name, edges, accepting)

    if num_states is None:
        num_states = max(
            [max(declared, default=-1)] + [e.target for _, edges, _ in declared.values() for e in edges]
        ) + 1
    if not 0 <= initial < num_states:
        raise _error_at(f"start state {initial} out of range", start_token)

    raw_edges = [declared[q][1] if q in declared else [] for q in range(num_states)]
    accepting_states = frozenset(q for q, (_, _, acc) in declared.items() if acc)
    if acceptance == _ACCEPT_ALL:
        accepting_states = frozenset(range(num_states))
    edges, sink = complete_with_sink(atomic_props, raw_edges)
    if sink is not None:
        logger.warning("HOA automaton %r is incomplete; completed with an implicit rejecting sink", name)

    total = num_states + (1 if sink is not None else 0)
    names = tuple(declared[q][0] if q in declared else "" for q in range(num_states))
    automaton = Ldba(
        atomic_props=atomic_props,
        num_states=total,
        initial=initial,
        accepting=accepting_states,
        edges=edges,
        accepting_component=infer_accepting_component(total, edges),
        implicit_sink=sink,
        name=name,
        state_names=names + (("sink",) if sink is not None else ()),
    )
    problems = validate_suitable(automaton)
    if problems:
        raise UnsuitableLdbaError(problems)
    return automaton


def _edge(tree: Tree, atomic_props: tuple[str, ...]) -> tuple[LdbaEdge, Token]:
    parts = list(tree.children)
    if not parts or not (isinstance(parts[0], Tree) and parts[0].data == "label"):
        raise UnsupportedHoaFeatureError("implicit edge labels")
    label_tree = parts.pop(0)
    targets = parts.pop(0)
    if len(targets.children) > 1:
        raise UnsupportedHoaFeatureError("alternation (conjunctive edge targets)")
    if parts:
        raise UnsupportedHoaFeatureError("transition-based acceptance")
    label = _label(label_tree.children[0], atomic_props)
    target = targets.children[0]
    return LdbaEdge(None if label is _EPSILON else label, int(target)), target


def read_hoa(path) -> Ldba:
    """Parse a HOA file."""
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise HoaFormatError(f"cannot read {path}: {exc}") from exc
    return parse_hoa(text)


# Writer

def _format_label(formula: Ltl, index: dict[str, int]) -> tuple[str, int]:
    if isinstance(formula, TrueConst):
        return "t", 3
    if isinstance(formula, FalseConst):
        return "f", 3
    if isinstance(formula, Prop):
        return str(index[formula.name]), 3
    if isinstance(formula, Not):
        text, level = _format_label(formula.operand, index)
        return "!" + (text if level >= 2 else f"({text})"), 2
    left, left_level = _format_label(formula.left, index)
    right, right_level = _format_label(formula.right, index)
    if isinstance(formula, And):
        left = left if left_level >= 1 else f"({left})"
        right = right if right_level >= 2 else f"({right})"
        return f"{left}&{right}", 1
    if isinstance(formula, Or):
        right = right if right_level >= 1 else f"({right})"
        return f"{left}|{right}", 0
    raise TypeError(f"not a letter formula: {formula!r}")


def format_label(formula: Optional[Ltl], atomic_props: tuple[str, ...]) -> str:
    """HOA label text (without brackets); ``None`` is the ε token."""
    if formula is None:
        return HOA_EPSILON_TOKEN
    return _format_label(formula, {p: i for i, p in enumerate(atomic_props)})[0]


def print_hoa(automaton: Ldba) -> str:
    """Canonical HOA text; the implicit sink and its edges are omitted."""
    a = automaton
    sink = a.implicit_sink
    aps = " ".join(json.dumps(p) for p in a.atomic_props)
    lines = ["HOA: v1"]
    if a.name:
        lines.append(f"name: {json.dumps(a.name, ensure_ascii=False)}")
    lines += [
        f"States: {a.declared_size}",
        f"Start: {a.initial}",
        f"AP: {len(a.atomic_props)}" + (f" {aps}" if aps else ""),
        "acc-name: Buchi",
        "Acceptance: 1 Inf(0)",
        "properties: trans-labels explicit-labels state-acc",
        "--BODY--",
    ]
    for q in range(a.num_states):
        if q == sink:
            continue
        head = f"State: {q}"
        if q < len(a.state_names) and a.state_names[q]:
            head += f" {json.dumps(a.state_names[q], ensure_ascii=False)}"
        if q in a.accepting:
            head += " {0}"
        lines.append(head)
        for edge in a.edges[q]:
            if edge.target == sink:
                continue
            lines.append(f"[{format_label(edge.label, a.atomic_props)}] {edge.target}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"

