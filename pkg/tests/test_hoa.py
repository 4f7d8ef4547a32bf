"""Tests for the HOA reader and writer."""

import pytest

from core.errors import HoaFormatError, UnsuitableLdbaError, UnsupportedHoaFeatureError
from core.hoa import format_label, parse_hoa, print_hoa, read_hoa
from core.ltl import And, Not, Or, Prop
from tests.conftest import FIXTURES

HEADER = """HOA: v1
States: 2
Start: 0
AP: 1 "a"
Acceptance: 1 Inf(0)
--BODY--
"""


def hoa(body: str, header: str = HEADER) -> str:
    return header + body + "--END--\n"


class TestReadHoa:
    """Tests for parse_hoa and read_hoa."""

    @pytest.mark.parametrize("name", ["case_study_ldba.hoa", "example1_ldba.hoa", "toy_ldba.hoa"])
    def test_bundled_files_print_back_verbatim(self, name):
        """The bundled files are already in canonical form."""
        path = FIXTURES / name
        assert print_hoa(read_hoa(path)) == path.read_text(encoding="utf-8")

    def test_print_parse_fixpoint(self):
        """Printing, parsing and printing again changes nothing."""
        text = hoa('State: 0 "start"\n[0 | !0&0] 1\n[!0] 0\nState: 1 {0}\n[t] 1\n')
        once = print_hoa(parse_hoa(text))
        assert print_hoa(parse_hoa(once)) == once
        assert 'State: 0 "start"' in once

    def test_epsilon_edges(self):
        ldba = read_hoa(FIXTURES / "example1_ldba.hoa")
        assert ldba.epsilon_targets(0) == (1,)
        assert ldba.epsilon_targets(1) == ()
        assert ldba.accepting == frozenset({2})

    def test_comments_are_ignored(self):
        text = hoa("/* self loop */\nState: 0 {0}\n[t] 0\n", header=HEADER.replace("States: 2", "States: 1"))
        assert parse_hoa(text).num_states == 1

    def test_accept_all(self):
        """Acceptance 0 t makes every state accepting."""
        header = HEADER.replace("Acceptance: 1 Inf(0)", "Acceptance: 0 t")
        ldba = parse_hoa(hoa("State: 0\n[t] 1\nState: 1\n[t] 0\n", header))
        assert ldba.accepting == frozenset({0, 1})

    def test_incomplete_automaton_gets_a_sink(self):
        """Missing letters go to an implicit sink that the writer leaves out."""
        text = hoa("State: 0\n[0] 1\n[!0] 0\nState: 1 {0}\n[0] 1\n")
        ldba = parse_hoa(text)
        assert ldba.implicit_sink == 2
        assert ldba.successor(1, set()) == 2
        printed = print_hoa(ldba)
        assert "States: 2" in printed
        assert "] 2" not in printed


class TestHoaErrors:
    """Tests for malformed and unsupported HOA input."""

    def test_syntax_error_position(self):
        """Errors carry 1-based line and column."""
        text = hoa("State: 0\n[0] 1\n[!0] 0\nState: 1 {0}\n[0 1\n")
        with pytest.raises(HoaFormatError) as info:
            parse_hoa(text)
        assert (info.value.line, info.value.column) == (11, 4)

    def test_ap_index_out_of_range(self):
        text = hoa("State: 0\n[1] 0\n[!1] 0\n")
        with pytest.raises(HoaFormatError, match="AP index 1 out of range") as info:
            parse_hoa(text)
        assert info.value.line == 8

    def test_edge_target_out_of_range(self):
        with pytest.raises(HoaFormatError, match="edge target 5"):
            parse_hoa(hoa("State: 0\n[t] 5\n"))

    def test_missing_start(self):
        with pytest.raises(HoaFormatError, match="missing Start"):
            parse_hoa(hoa("State: 0\n[t] 0\n", HEADER.replace("Start: 0\n", "")))

    def test_unexpected_end(self):
        with pytest.raises(HoaFormatError):
            parse_hoa(HEADER + "State: 0\n[t] 0\n")

    @pytest.mark.parametrize(
        "header_edit,body,feature",
        [
            (("AP: 1", 'Alias: @x 0\nAP: 1'), "State: 0\n[t] 0\n", "aliases"),
            (("Acceptance: 1 Inf(0)", "Acceptance: 2 Inf(0) & Inf(1)"), "State: 0\n[t] 0\n", "acceptance"),
            (None, "State: 0\n[t] 0 {0}\n", "transition-based"),
            (None, "State: 0\n[t] 0&1\n", "alternation"),
            (None, "State: [0] 0\n[t] 0\n", "state labels"),
            (("HOA: v1", "HOA: v2"), "State: 0\n[t] 0\n", "version"),
        ],
    )
    def test_unsupported_features(self, header_edit, body, feature):
        header = HEADER if header_edit is None else HEADER.replace(*header_edit)
        with pytest.raises(UnsupportedHoaFeatureError, match=feature):
            parse_hoa(hoa(body, header))

    def test_epsilon_must_be_the_whole_label(self):
        with pytest.raises(HoaFormatError, match="whole label"):
            parse_hoa(hoa("State: 0\n[eps & 0] 1\n[t] 0\nState: 1 {0}\n[t] 1\n"))

    def test_nondeterministic_automaton_is_rejected(self):
        """Letter nondeterminism makes the automaton unsuitable."""
        with pytest.raises(UnsuitableLdbaError, match="nondeterministic"):
            parse_hoa(hoa("State: 0\n[t] 0\n[0] 1\nState: 1 {0}\n[t] 1\n"))


class TestFormatLabel:
    """Tests for label printing."""

    def test_precedence(self):
        props = ("a", "b")
        a, b = Prop("a"), Prop("b")
        assert format_label(And(Not(a), b), props) == "!0&1"
        assert format_label(Or(a, And(a, b)), props) == "0|0&1"
        assert format_label(And(a, Or(a, b)), props) == "0&(0|1)"
        assert format_label(Not(Or(a, b)), props) == "!(0|1)"

    def test_epsilon(self):
        assert format_label(None, ("a",)) == "eps"
