"""Safety automata and limit-deterministic Büchi automata.

Safety formulas are translated by formula progression: a state is the obligation
still to be met, reading a letter rewrites it (``[]g`` unfolds to ``g & X[]g`` and
``X`` strips one step), and the contradiction ``false`` is the single rejecting sink.
Obligations are kept canonical (flattened, sorted, duplicate-free conjunctions and
disjunctions, constants absorbed, complementary literals collapsed) so state counts
are reproducible. States from which every continuation is eventually rejected are
merged into the sink.

General LDBAs are not constructed here; they are read from HOA files (``core.hoa``)
and checked with ``validate_suitable``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Iterable, Optional, Sequence

import networkx as nx

from .config import SAFETY_STATE_CAP
from .errors import AutomatonTooLargeError, NotSafetyFormulaError, UnsuitableLdbaError
from .ltl import (
    TRUE,
    And,
    FalseConst,
    Ltl,
    Next,
    Not,
    Or,
    Prop,
    Release,
    TrueConst,
    Until,
    holds,
    is_syntactic_safety,
    print_ltl,
    propositions,
    to_pnf,
)

logger = logging.getLogger(__name__)

FALSE = FalseConst()


def letter_of(mask: int, atomic_props: Sequence[str]) -> frozenset[str]:
    """Set of propositions encoded by a bitmask (bit i = atomic_props[i])."""
    return frozenset(p for i, p in enumerate(atomic_props) if mask >> i & 1)


def mask_of(label: Iterable[str], atomic_props: Sequence[str]) -> int:
    """Bitmask of a label; propositions outside ``atomic_props`` are ignored."""
    label = set(label)
    return sum(1 << i for i, p in enumerate(atomic_props) if p in label)


def minterm(mask: int, atomic_props: Sequence[str]) -> Ltl:
    literals = [Prop(p) if mask >> i & 1 else Not(Prop(p)) for i, p in enumerate(atomic_props)]
    return reduce(lambda acc, lit: And(acc, lit), literals[1:], literals[0]) if literals else TRUE


# Canonical obligations

def _sort_key(formula: Ltl) -> tuple[str, str]:
    return print_ltl(formula), repr(formula)


def _operands(formula: Ltl, cls: type) -> Iterable[Ltl]:
    if isinstance(formula, cls):
        yield from _operands(formula.left, cls)
        yield from _operands(formula.right, cls)
    else:
        yield formula


def _junction(items: Iterable[Ltl], cls: type, unit: Ltl, zero: Ltl) -> Ltl:
    operands = set()
    for item in items:
        for operand in _operands(item, cls):
            if operand == zero:
                return zero
            if operand != unit:
                operands.add(operand)
    for operand in operands:
        if isinstance(operand, Not) and operand.operand in operands:
            return zero
    if not operands:
        return unit
    ordered = sorted(operands, key=_sort_key)
    return reduce(lambda acc, f: cls(f, acc), reversed(ordered[:-1]), ordered[-1])


def conjoin(*items: Ltl) -> Ltl:
    return _junction(items, And, TRUE, FALSE)


def disjoin(*items: Ltl) -> Ltl:
    return _junction(items, Or, FALSE, TRUE)


def canonical(formula: Ltl) -> Ltl:
    """Canonical form of a formula in positive normal form."""
    if isinstance(formula, And):
        return conjoin(canonical(formula.left), canonical(formula.right))
    if isinstance(formula, Or):
        return disjoin(canonical(formula.left), canonical(formula.right))
    if isinstance(formula, Next):
        return Next(canonical(formula.operand))
    if isinstance(formula, Until):
        return Until(canonical(formula.left), canonical(formula.right))
    if isinstance(formula, Release):
        return Release(canonical(formula.left), canonical(formula.right))
    return formula


def progress(formula: Ltl, letter: frozenset[str]) -> Ltl:
    """Obligation left after reading ``letter``; input must be canonical PNF."""
    if isinstance(formula, (TrueConst, FalseConst)):
        return formula
    if isinstance(formula, Prop):
        return TRUE if formula.name in letter else FALSE
    if isinstance(formula, Not):
        return FALSE if formula.operand.name in letter else TRUE
    if isinstance(formula, And):
        return conjoin(progress(formula.left, letter), progress(formula.right, letter))
    if isinstance(formula, Or):
        return disjoin(progress(formula.left, letter), progress(formula.right, letter))
    if isinstance(formula, Next):
        return formula.operand
    if isinstance(formula, Release):
        return conjoin(progress(formula.right, letter), disjoin(progress(formula.left, letter), formula))
    if isinstance(formula, Until):
        return disjoin(progress(formula.right, letter), conjoin(progress(formula.left, letter), formula))
    raise TypeError(f"not an LTL formula: {formula!r}")


# Safety automata

@dataclass(frozen=True, eq=False)
class SafetyAutomaton:
    """Deterministic automaton whose only rejecting states are absorbing.

    ``delta[q][mask]`` is the successor of ``q`` on the letter with bitmask ``mask``
    over ``atomic_props``. A word is accepted iff the run never leaves ``accepting``.
    """
    atomic_props: tuple[str, ...]
    initial: int
    delta: tuple[tuple[int, ...], ...]
    accepting: frozenset[int]
    state_names: tuple[str, ...] = ()
    formula: Optional[Ltl] = None

    @property
    def num_states(self) -> int:
        return len(self.delta)

    @property
    def num_letters(self) -> int:
        return 1 << len(self.atomic_props)

    @property
    def sink(self) -> Optional[int]:
        rejecting = [q for q in range(self.num_states) if q not in self.accepting]
        return rejecting[0] if rejecting else None

    def step(self, state: int, label: Iterable[str]) -> int:
        return self.delta[state][mask_of(label, self.atomic_props)]

    def accepts_lasso(self, prefix: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
        """Whether the word prefix . loop^omega keeps the run inside ``accepting``."""
        state = self.initial
        if state not in self.accepting:
            return False
        for letter in prefix:
            state = self.step(state, letter)
            if state not in self.accepting:
                return False
        seen = set()
        while state not in seen:
            seen.add(state)
            for letter in loop:
                state = self.step(state, letter)
                if state not in self.accepting:
                    return False
        return True

    def validate(self) -> list[str]:
        """Check totality, determinism and absorbing rejection."""
        problems = []
        if not 0 <= self.initial < self.num_states:
            problems.append(f"initial state {self.initial} out of range")
        for q, row in enumerate(self.delta):
            if len(row) != self.num_letters:
                problems.append(f"state {q}: {len(row)} transitions for {self.num_letters} letters")
            for target in row:
                if not 0 <= target < self.num_states:
                    problems.append(f"state {q}: successor {target} out of range")
                elif q not in self.accepting and target in self.accepting:
                    problems.append(f"rejecting state {q} is not absorbing")
        return problems

    def to_ldba(self) -> "Ldba":
        """The same automaton as a deterministic Büchi automaton (no ε-edges)."""
        edges = []
        for q, row in enumerate(self.delta):
            by_target: dict[int, list[int]] = {}
            for mask, target in enumerate(row):
                by_target.setdefault(target, []).append(mask)
            state_edges = []
            for target, masks in sorted(by_target.items()):
                if len(masks) == self.num_letters:
                    label = TRUE
                else:
                    terms = [minterm(m, self.atomic_props) for m in masks]
                    label = reduce(lambda acc, t: Or(acc, t), terms[1:], terms[0])
                state_edges.append(LdbaEdge(label, target))
            edges.append(tuple(state_edges))
        return Ldba(
            atomic_props=self.atomic_props,
            num_states=self.num_states,
            initial=self.initial,
            accepting=self.accepting,
            edges=tuple(edges),
            accepting_component=frozenset(range(self.num_states)),
            name=print_ltl(self.formula) if self.formula is not None else "",
            state_names=self.state_names,
        )


def safety_to_automaton(formula: Ltl, state_cap: int = SAFETY_STATE_CAP) -> SafetyAutomaton:
    """Translate a syntactic-safety formula into a safety automaton.

    Args:
        formula: Formula with ``is_syntactic_safety(formula)``
        state_cap: Largest number of progression states explored

    Raises:
        NotSafetyFormulaError: If the formula is outside the safety fragment
        AutomatonTooLargeError: If more than ``state_cap`` states are needed
    """
    if not is_syntactic_safety(formula):
        raise NotSafetyFormulaError(f"not a syntactic safety formula: {print_ltl(formula)}")

    atomic_props = tuple(sorted(propositions(formula)))
    letters = [letter_of(m, atomic_props) for m in range(1 << len(atomic_props))]
    start = canonical(to_pnf(formula))

    index = {start: 0}
    obligations = [start]
    delta: list[list[int]] = []
    frontier = 0
    while frontier < len(obligations):
        current = obligations[frontier]
        row = []
        for letter in letters:
            following = progress(current, letter)
            if following not in index:
                if len(obligations) >= state_cap:
                    raise AutomatonTooLargeError(state_cap)
                index[following] = len(obligations)
                obligations.append(following)
            row.append(index[following])
        delta.append(row)
        frontier += 1

    # Greatest fixpoint: states that can stay clear of false forever.
    live = {q for q, f in enumerate(obligations) if f != FALSE}
    while True:
        pruned = {q for q in live if any(t in live for t in delta[q])}
        if pruned == live:
            break
        live = pruned

    # Renumber reachable states; every dead state collapses into the sink.
    order: list[int] = []
    renumber: dict[int, int] = {}
    sink_id: Optional[int] = None

    def visit(q: int) -> int:
        nonlocal sink_id
        if q not in live:
            if sink_id is None:
                sink_id = len(order)
                order.append(-1)
            return sink_id
        if q not in renumber:
            renumber[q] = len(order)
            order.append(q)
        return renumber[q]

    visit(0)
    new_delta: list[list[int]] = []
    position = 0
    while position < len(order):
        q = order[position]
        if q == -1:
            new_delta.append([position] * len(letters))
        else:
            new_delta.append([visit(t) for t in delta[q]])
        position += 1

    names = tuple("false" if q == -1 else print_ltl(obligations[q]) for q in order)
    automaton = SafetyAutomaton(
        atomic_props=atomic_props,
        initial=0,
        delta=tuple(tuple(row) for row in new_delta),
        accepting=frozenset(i for i, q in enumerate(order) if q != -1),
        state_names=names,
        formula=formula,
    )
    logger.debug(
        "Safety automaton for %s: %d states (%d explored)",
        print_ltl(formula), automaton.num_states, len(obligations),
    )
    return automaton


# LDBAs

@dataclass(frozen=True)
class LdbaEdge:
    """Edge labeled by a letter formula over the atomic propositions, or ε when None."""
    label: Optional[Ltl]
    target: int

    @property
    def is_epsilon(self) -> bool:
        return self.label is None


@dataclass(frozen=True, eq=False)
class Ldba:
    """Limit-deterministic Büchi automaton with explicit ε-edges.

    ``accepting_component`` is Q_A; the other states form the initial component.
    ``implicit_sink`` is the rejecting state added to complete an incomplete input;
    it is not part of the declared automaton.
    """
    atomic_props: tuple[str, ...]
    num_states: int
    initial: int
    accepting: frozenset[int]
    edges: tuple[tuple[LdbaEdge, ...], ...]
    accepting_component: frozenset[int]
    implicit_sink: Optional[int] = None
    name: str = ""
    state_names: tuple[str, ...] = ()

    @property
    def declared_size(self) -> int:
        return self.num_states - (1 if self.implicit_sink is not None else 0)

    @property
    def num_letters(self) -> int:
        return 1 << len(self.atomic_props)

    @property
    def has_epsilon(self) -> bool:
        return any(edge.is_epsilon for row in self.edges for edge in row)

    @cached_property
    def _letter_table(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        letters = [letter_of(m, self.atomic_props) for m in range(self.num_letters)]
        return tuple(
            tuple(
                tuple(sorted({e.target for e in row if not e.is_epsilon and holds(e.label, letter)}))
                for letter in letters
            )
            for row in self.edges
        )

    def delta(self, state: int, label: Iterable[str]) -> tuple[int, ...]:
        """Successors of ``state`` on a letter (ε-edges excluded)."""
        return self._letter_table[state][mask_of(label, self.atomic_props)]

    def successor(self, state: int, label: Iterable[str]) -> int:
        """Unique letter successor.

        Raises:
            UnsuitableLdbaError: If the letter has no successor or several
        """
        targets = self.delta(state, label)
        if len(targets) != 1:
            raise UnsuitableLdbaError([f"state {state}: {len(targets)} successors on {sorted(label)}"])
        return targets[0]

    def epsilon_targets(self, state: int) -> tuple[int, ...]:
        return tuple(sorted({e.target for e in self.edges[state] if e.is_epsilon}))

    def accepts_lasso(self, prefix: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
        """Whether some resolution of the ε-choices accepts prefix . loop^omega."""
        if not loop:
            raise ValueError("lasso loop must contain at least one letter")
        word = [frozenset(letter) for letter in list(prefix) + list(loop)]
        n = len(word)

        def following(i: int) -> int:
            return i + 1 if i + 1 < n else len(prefix)

        graph = nx.DiGraph()
        start = (self.initial, 0)
        graph.add_node(start)
        stack = [start]
        while stack:
            node = stack.pop()
            q, i = node
            successors = [((t, i), False) for t in self.epsilon_targets(q)]
            successors += [((t, following(i)), True) for t in self.delta(q, word[i])]
            for nxt, reads in successors:
                if nxt not in graph:
                    stack.append(nxt)
                if reads or not graph.has_edge(node, nxt):
                    graph.add_edge(node, nxt, reads=reads)

        for component in nx.strongly_connected_components(graph):
            if not any(q in self.accepting for q, _ in component):
                continue
            inner = graph.subgraph(component)
            if any(data["reads"] for _, _, data in inner.edges(data=True)):
                return True
        return False


def infer_accepting_component(num_states: int, edges: Sequence[Sequence[LdbaEdge]]) -> frozenset[int]:
    """Q_A as the closure of the ε-targets under letter edges; all states without ε."""
    seeds = {e.target for row in edges for e in row if e.is_epsilon}
    if not seeds:
        return frozenset(range(num_states))
    component = set(seeds)
    stack = list(seeds)
    while stack:
        q = stack.pop()
        for edge in edges[q]:
            if not edge.is_epsilon and edge.target not in component:
                component.add(edge.target)
                stack.append(edge.target)
    return frozenset(component)


def complete_with_sink(
    atomic_props: Sequence[str],
    edges: Sequence[Sequence[LdbaEdge]],
) -> tuple[tuple[tuple[LdbaEdge, ...], ...], Optional[int]]:
    """Send letters without a successor to one added rejecting sink.

    Returns:
        Tuple of (completed edges, sink index or None if nothing was missing)
    """
    letters = [letter_of(m, atomic_props) for m in range(1 << len(atomic_props))]
    sink = len(edges)
    completed = []
    missing_any = False
    for row in edges:
        labels = [e.label for e in row if not e.is_epsilon]
        covered = all(any(holds(label, letter) for label in labels) for letter in letters)
        if covered:
            completed.append(tuple(row))
            continue
        missing_any = True
        rest = reduce(lambda acc, l: Or(acc, l), labels[1:], labels[0]) if labels else FALSE
        completed.append(tuple(row) + (LdbaEdge(Not(rest), sink),))
    if not missing_any:
        return tuple(completed), None
    completed.append((LdbaEdge(TRUE, sink),))
    return tuple(completed), sink


def validate_suitable(automaton: Ldba) -> list[str]:
    """Check the LDBA invariants and suitability.

    Returns:
        List of violations (empty iff the automaton is a suitable LDBA)
    """
    problems = []
    a = automaton
    if len(a.edges) != a.num_states:
        return [f"{len(a.edges)} edge lists for {a.num_states} states"]
    if not 0 <= a.initial < a.num_states:
        problems.append(f"initial state {a.initial} out of range")
    for q, row in enumerate(a.edges):
        for edge in row:
            if not 0 <= edge.target < a.num_states:
                problems.append(f"state {q}: edge target {edge.target} out of range")
    if problems:
        return problems

    for q in range(a.num_states):
        counts = [len(targets) for targets in a._letter_table[q]]
        blocked = sum(1 for c in counts if c == 0)
        branching = sum(1 for c in counts if c > 1)
        if blocked:
            problems.append(f"state {q}: {blocked} letters without a successor")
        if branching:
            problems.append(f"state {q}: nondeterministic on {branching} letters")

    component = a.accepting_component
    for q in sorted(a.accepting - component):
        problems.append(f"accepting state {q} lies outside the accepting component")
    for q, row in enumerate(a.edges):
        for edge in row:
            if edge.is_epsilon and q in component:
                problems.append(f"state {q} in the accepting component has an ε-edge")
            elif edge.is_epsilon and edge.target not in component:
                problems.append(f"ε-edge {q} -> {edge.target} does not enter the accepting component")
            elif not edge.is_epsilon and q in component and edge.target not in component:
                problems.append(f"letter edge {q} -> {edge.target} leaves the accepting component")
    return problems


def trivial_safety_automaton() -> SafetyAutomaton:
    """One accepting state looping on every letter: the automaton of ``true``."""
    return SafetyAutomaton(
        atomic_props=(),
        initial=0,
        delta=((0,),),
        accepting=frozenset({0}),
        state_names=("true",),
        formula=TRUE,
    )


def trivial_ldba() -> Ldba:
    """One accepting state looping on every letter, no ε-edges."""
    return Ldba(
        atomic_props=(),
        num_states=1,
        initial=0,
        accepting=frozenset({0}),
        edges=((LdbaEdge(TRUE, 0),),),
        accepting_component=frozenset({0}),
        name="true",
    )
