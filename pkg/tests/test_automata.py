"""Tests for safety automata and LDBA checks."""

from itertools import product as cartesian

import numpy as np
import pytest

from core.automata import (
    Ldba,
    LdbaEdge,
    complete_with_sink,
    infer_accepting_component,
    safety_to_automaton,
    trivial_ldba,
    trivial_safety_automaton,
    validate_suitable,
)
from core.errors import AutomatonTooLargeError, NotSafetyFormulaError
from core.hoa import read_hoa
from core.ltl import TRUE, Not, Prop, evaluate_lasso, parse_ltl
from tests.conftest import FIXTURES

SAFETY_CORPUS = [
    "true",
    "false",
    "a",
    "!a",
    "X a",
    "X X !b",
    "[]a",
    "[]!a",
    "[](a -> X b)",
    "[]!(a & X a)",
    "a & X !a",
    "[](a | b)",
    "[](a -> X X b)",
    "X []a",
    "[]a | []b",
    "!a | X b",
    "[](a -> []a)",
    "[]X a",
    "!<>a",
    "!<>(a & b)",
    "[](X a -> b)",
    "a & []b",
    "[](!a | X (a | b))",
    "X (a & X b)",
    "[](a -> X !a) & [](b -> X a)",
]

LETTERS = [frozenset(), frozenset({"a"}), frozenset({"b"}), frozenset({"a", "b"})]


def short_lassos(letters, max_length=4):
    """Every lasso (prefix, loop) with a non-empty loop and total length <= max_length."""
    for length in range(1, max_length + 1):
        for word in cartesian(letters, repeat=length):
            for split in range(length):
                yield list(word[:split]), list(word[split:])


def random_lassos(letters, count, max_length=8, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        length = int(rng.integers(5, max_length + 1))
        word = [letters[i] for i in rng.integers(len(letters), size=length)]
        split = int(rng.integers(length))
        yield word[:split], word[split:]


class TestSafetyTranslation:
    """Tests for safety_to_automaton."""

    @pytest.mark.automata
    @pytest.mark.parametrize("text", SAFETY_CORPUS)
    def test_language_matches_formula(self, text):
        """The automaton accepts exactly the lassos satisfying the formula."""
        formula = parse_ltl(text)
        automaton = safety_to_automaton(formula)
        assert automaton.validate() == []
        for prefix, loop in list(short_lassos(LETTERS)) + list(random_lassos(LETTERS, 200)):
            expected = evaluate_lasso(formula, prefix, loop)
            assert automaton.accepts_lasso(prefix, loop) == expected, (text, prefix, loop)

    @pytest.mark.automata
    @pytest.mark.parametrize("text", SAFETY_CORPUS)
    def test_ldba_view_has_the_same_language(self, text):
        """A safety automaton read as a Büchi automaton is a suitable LDBA with the same language."""
        automaton = safety_to_automaton(parse_ltl(text))
        ldba = automaton.to_ldba()
        assert validate_suitable(ldba) == []
        for prefix, loop in short_lassos(LETTERS, max_length=3):
            assert ldba.accepts_lasso(prefix, loop) == automaton.accepts_lasso(prefix, loop)

    def test_no_consecutive_d_has_three_states(self):
        """[]!(d & X d): waiting, just saw d, and the rejecting sink."""
        automaton = safety_to_automaton(parse_ltl("[]!(d & X d)"))
        assert automaton.num_states == 3
        seen_d = automaton.step(automaton.initial, {"d"})
        assert seen_d in automaton.accepting
        assert automaton.step(seen_d, set()) == automaton.initial
        assert automaton.step(seen_d, {"d"}) == automaton.sink

    def test_sink_is_absorbing(self):
        automaton = safety_to_automaton(parse_ltl("[]a"))
        sink = automaton.sink
        assert sink is not None
        assert set(automaton.delta[sink]) == {sink}

    def test_dead_obligations_merge_into_the_sink(self):
        """X (a & !a) can never be met, so the automaton is just the sink."""
        automaton = safety_to_automaton(parse_ltl("X (a & !a)"))
        assert automaton.num_states == 1
        assert automaton.accepting == frozenset()
        assert not automaton.accepts_lasso([], [{"a"}])

    def test_state_counts_are_reproducible(self):
        """Equivalent spellings give the same number of states."""
        first = safety_to_automaton(parse_ltl("[](a -> X b) & []!b"))
        second = safety_to_automaton(parse_ltl("[]!b & [](!a | X b)"))
        assert first.num_states == second.num_states

    def test_non_safety_formula(self):
        with pytest.raises(NotSafetyFormulaError):
            safety_to_automaton(parse_ltl("<>a"))

    def test_state_cap(self):
        """Exceeding the cap points the user at HOA import."""
        with pytest.raises(AutomatonTooLargeError) as info:
            safety_to_automaton(parse_ltl("X X X X a"), state_cap=3)
        assert info.value.limit == 3
        assert "HOA" in str(info.value)

    def test_trivial_automaton_accepts_everything(self):
        automaton = trivial_safety_automaton()
        assert automaton.sink is None
        assert automaton.accepts_lasso([{"x"}], [set()])


class TestLdba:
    """Tests for LDBA language, completion and suitability."""

    @pytest.mark.automata
    @pytest.mark.parametrize(
        "file_name,formula,props",
        [
            ("case_study_ldba.hoa", "[]<>b & <>[]c", ("b", "c")),
            ("example1_ldba.hoa", "[]<>b", ("b",)),
            ("toy_ldba.hoa", "[]<>g", ("g",)),
        ],
    )
    def test_bundled_automata_recognize_their_formulas(self, file_name, formula, props):
        """Some ε-resolution accepts a lasso iff the lasso satisfies the formula."""
        ldba = read_hoa(FIXTURES / file_name)
        parsed = parse_ltl(formula)
        letters = [frozenset(p for i, p in enumerate(props) if mask >> i & 1) for mask in range(1 << len(props))]
        for prefix, loop in short_lassos(letters):
            assert ldba.accepts_lasso(prefix, loop) == evaluate_lasso(parsed, prefix, loop), (prefix, loop)

    def test_case_study_automaton_is_completed(self):
        """Letters without c fall into an implicit sink outside the declared states."""
        ldba = read_hoa(FIXTURES / "case_study_ldba.hoa")
        assert ldba.declared_size == 3
        assert ldba.implicit_sink == 3
        assert ldba.successor(1, {"b"}) == 3
        assert ldba.epsilon_targets(0) == (2,)
        assert ldba.accepting_component == frozenset({1, 2, 3})
        assert ldba.has_epsilon

    def test_successor_on_accepting_component(self):
        ldba = read_hoa(FIXTURES / "case_study_ldba.hoa")
        assert ldba.successor(2, {"b", "c"}) == 1
        assert ldba.successor(1, {"c"}) == 2
        assert ldba.delta(0, {"b"}) == (0,)

    def test_complete_with_sink(self):
        """A missing letter gets an edge to one new absorbing state."""
        edges, sink = complete_with_sink(("a",), [[LdbaEdge(Prop("a"), 0)]])
        assert sink == 1
        assert edges[0][-1] == LdbaEdge(Not(Prop("a")), 1)
        assert edges[1] == (LdbaEdge(TRUE, 1),)

    def test_complete_automaton_is_left_alone(self):
        edges, sink = complete_with_sink(("a",), [[LdbaEdge(TRUE, 0)]])
        assert sink is None
        assert edges == ((LdbaEdge(TRUE, 0),),)

    def test_accepting_component_inference(self):
        edges = [[LdbaEdge(TRUE, 0), LdbaEdge(None, 1)], [LdbaEdge(TRUE, 2)], [LdbaEdge(TRUE, 2)]]
        assert infer_accepting_component(3, edges) == frozenset({1, 2})
        assert infer_accepting_component(1, [[LdbaEdge(TRUE, 0)]]) == frozenset({0})

    def test_nondeterminism_is_unsuitable(self):
        ldba = Ldba(
            atomic_props=("a",),
            num_states=2,
            initial=0,
            accepting=frozenset({1}),
            edges=((LdbaEdge(TRUE, 0), LdbaEdge(Prop("a"), 1)), (LdbaEdge(TRUE, 1),)),
            accepting_component=frozenset({0, 1}),
        )
        assert validate_suitable(ldba) == ["state 0: nondeterministic on 1 letters"]

    def test_accepting_state_in_initial_component(self):
        """Accepting states must lie in the accepting component."""
        ldba = Ldba(
            atomic_props=(),
            num_states=2,
            initial=0,
            accepting=frozenset({0}),
            edges=((LdbaEdge(TRUE, 0), LdbaEdge(None, 1)), (LdbaEdge(TRUE, 1),)),
            accepting_component=frozenset({1}),
        )
        assert validate_suitable(ldba) == ["accepting state 0 lies outside the accepting component"]

    def test_epsilon_inside_accepting_component(self):
        ldba = Ldba(
            atomic_props=(),
            num_states=2,
            initial=0,
            accepting=frozenset({1}),
            edges=((LdbaEdge(TRUE, 1),), (LdbaEdge(TRUE, 1), LdbaEdge(None, 0))),
            accepting_component=frozenset({0, 1}),
        )
        assert "state 1 in the accepting component has an ε-edge" in validate_suitable(ldba)

    def test_trivial_ldba(self):
        assert validate_suitable(trivial_ldba()) == []
        assert trivial_ldba().accepts_lasso([], [set()])
