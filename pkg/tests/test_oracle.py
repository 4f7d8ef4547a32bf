"""Tests for the exact oracle.

Case-study numbers (grid with slip 0.8/0.1/0.1):
- staying safe is always possible from the start (avoid entering the d cell);
- the safe route to the c columns is the lower corridor, two 0.8 moves that can
  slip into absorbing cells: Büchi probability 0.64 given the safe actions;
- the single combined objective prefers the upper route through the d cell, which
  fails only if the agent stays on it: probability 0.8.
"""

import json
from itertools import product as cartesian

import numpy as np
import pytest
from scipy import sparse

from core.errors import EmptyActionSetError
from core.models import CELL_ABSORBING
from core.oracle import (
    bottom_sccs,
    crafted_rewards,
    exact_crafted_q,
    exact_policy_value,
    greedy_choice,
    ltl_action_sets,
    max_buchi_prob,
    max_combined_prob,
    max_qoc_q,
    max_qoc_return,
    max_safety_prob,
    mec_decomposition,
    mixing_gap,
    reach_probability,
    run_oracle,
    safe_action_sets,
    state_values,
    threshold_action_sets,
    write_oracle_report,
)
from core.product import ProductPolicy
from tests.conftest import RANDOM_SEEDS, cell_states, env_moves, random_product

PROBABILITY_TOLERANCE = 1e-8


@pytest.fixture(scope="module")
def case_study_oracle(case_study_product):
    return run_oracle(case_study_product)


@pytest.fixture(scope="module")
def example1_oracle(example1_product):
    return run_oracle(example1_product)


def pure_policies(product, sets=None):
    """Every deterministic memoryless policy choosing from ``sets`` (all actions when None)."""
    options = [sorted(product.actions[x] if sets is None else sets[x]) for x in range(product.num_states)]
    for choice in cartesian(*options):
        yield ProductPolicy.deterministic(product, list(choice))


def policy_count(product, sets=None):
    return int(np.prod([len(product.actions[x] if sets is None else sets[x]) for x in range(product.num_states)]))


@pytest.fixture(scope="module")
def small_random_products():
    """Random products small enough to enumerate every pure policy."""
    chosen = []
    for seed in range(100):
        p = random_product(seed, num_states=4)
        if policy_count(p) <= 256:
            chosen.append(p)
        if len(chosen) == 6:
            break
    assert chosen
    return chosen


@pytest.fixture(scope="module")
def three_action_products():
    """Random products of six to eight states where some state offers three actions."""
    chosen = []
    for seed in range(1000):
        for size in (3, 4):
            p = random_product(seed, num_states=size, num_actions=3)
            widest = max(len(actions) for actions in p.actions)
            if 6 <= p.num_states <= 8 and widest == 3 and policy_count(p) <= 729:
                chosen.append(p)
        if len(chosen) >= 3:
            break
    assert len(chosen) >= 3
    return chosen[:3]


@pytest.fixture(scope="module")
def brute_force_products(small_random_products, three_action_products):
    return small_random_products + three_action_products



class TestCaseStudy:
    """Exact values on the case-study grid."""

    @pytest.mark.oracle
    def test_always_safe_from_the_start(self, case_study_product, case_study_oracle):
        assert case_study_oracle.pr_safety[case_study_product.initial] == pytest.approx(1.0)

    @pytest.mark.oracle
    def test_buchi_given_safe_actions(self, case_study_product, case_study_oracle):
        """Lower corridor: two moves that each succeed with 0.8."""
        assert case_study_oracle.pr_buchi_given_safe[case_study_product.initial] == pytest.approx(0.64, abs=1e-9)

    @pytest.mark.oracle
    def test_combined_objective(self, case_study_product, case_study_oracle):
        """Through the d cell, failing only when the agent stays on it."""
        x = case_study_product.initial
        assert case_study_oracle.pr_combined[x] == pytest.approx(0.8, abs=1e-9)
        assert case_study_oracle.pr_combined[x] > case_study_oracle.pr_buchi_given_safe[x]
        assert np.all(case_study_oracle.pr_combined <= case_study_oracle.pr_safety + 1e-9)

    @pytest.mark.oracle
    def test_safe_moves_next_to_the_d_cell(self, case_study_product, case_study_oracle):
        """Beside (0,3) only the move that cannot slip onto it is safe."""
        p, oracle = case_study_product, case_study_oracle
        for cell, moves in (((0, 2), {"left"}), ((0, 4), {"right"})):
            xs = cell_states(p, cell)
            assert xs
            for x in xs:
                assert env_moves(p, oracle.safe_sets[x]) == moves, cell

    @pytest.mark.oracle
    def test_corridor_is_safe_in_every_direction(self, case_study_product, case_study_oracle):
        """Absorbing cells carry no d, so slipping into them is still safe."""
        p, oracle = case_study_product, case_study_oracle
        for cell in ((3, 2), (3, 3)):
            for x in cell_states(p, cell):
                assert env_moves(p, oracle.safe_sets[x]) == {"up", "down", "right", "left"}

    @pytest.mark.oracle
    def test_corridor_ltl_choice(self, case_study_product, case_study_oracle):
        """Before the jump, only moving right along the corridor keeps 0.64."""
        p, oracle = case_study_product, case_study_oracle
        xs = [x for x in cell_states(p, (3, 2)) if p.states[x][2] == 0]
        assert xs
        for x in xs:
            assert oracle.ltl_sets[x] == frozenset({p.mdp.action_id("right")})

    @pytest.mark.oracle
    def test_trap_probability(self, case_study_product, case_study_oracle):
        """Playing uniformly inside the LTL sets ends in an absorbing cell with 0.36."""
        p = case_study_product
        absorbing = [
            x for x, (s, _, _) in enumerate(p.states)
            if p.mdp.grid.kind(p.mdp.cells[s]) == CELL_ABSORBING
        ]
        policy = ProductPolicy.uniform(p, case_study_oracle.ltl_sets)
        assert reach_probability(p, policy, absorbing)[p.initial] == pytest.approx(0.36, abs=1e-9)

    @pytest.mark.oracle
    def test_ltl_sets_nest_inside_safe_sets(self, case_study_oracle):
        assert case_study_oracle.violations() == []

    @pytest.mark.oracle
    def test_restricted_return_is_consistent(self, case_study_product, case_study_oracle):
        """The best return within the LTL sets is bounded and attained by the greedy policy."""
        p, oracle = case_study_product, case_study_oracle
        bound = p.mdp.reward_bound / (1.0 - p.gamma)
        assert np.all(oracle.max_return >= -1e-9)
        assert np.all(oracle.max_return <= bound + 1e-6)
        assert np.all(oracle.max_return <= max_qoc_return(p) + 1e-6)

        q = max_qoc_q(p, oracle.ltl_sets)
        greedy = ProductPolicy.deterministic(p, greedy_choice(p, q, oracle.ltl_sets))
        assert np.allclose(exact_policy_value(p, greedy, "qoc_return"), oracle.max_return, atol=1e-6)

    @pytest.mark.oracle
    def test_report(self, case_study_product, case_study_oracle, tmp_path):
        path = write_oracle_report(case_study_oracle, case_study_product, tmp_path / "oracle.json")
        report = json.loads(path.read_text(encoding="utf-8"))
        assert report["initial"] == case_study_product.state_name(case_study_product.initial)
        assert len(report["states"]) == case_study_product.num_states
        assert "safety_iterations" in report["notes"]
        first = report["states"][0]
        assert first["pr_safety"] == pytest.approx(1.0)
        assert set(first["ltl_actions"]) <= set(first["safe_actions"])


class TestBruteForce:
    """Oracle maxima against enumeration of every pure memoryless policy."""

    @pytest.mark.oracle
    def test_safety(self, brute_force_products):
        for p in brute_force_products:
            best = np.max([exact_policy_value(p, pi, "safety_prob") for pi in pure_policies(p)], axis=0)
            assert np.allclose(max_safety_prob(p), best, atol=PROBABILITY_TOLERANCE)

    @pytest.mark.oracle
    def test_buchi(self, brute_force_products):
        for p in brute_force_products:
            best = np.max([exact_policy_value(p, pi, "buchi_prob") for pi in pure_policies(p)], axis=0)
            assert np.allclose(max_buchi_prob(p), best, atol=PROBABILITY_TOLERANCE)

    @pytest.mark.oracle
    def test_buchi_within_safe_sets(self, brute_force_products):
        for p in brute_force_products:
            safe_sets = safe_action_sets(p, max_safety_prob(p))
            best = np.max([exact_policy_value(p, pi, "buchi_prob") for pi in pure_policies(p, safe_sets)], axis=0)
            assert np.allclose(max_buchi_prob(p, safe_sets), best, atol=PROBABILITY_TOLERANCE)

    @pytest.mark.oracle
    def test_return(self, brute_force_products):
        for p in brute_force_products:
            best = np.max([exact_policy_value(p, pi, "qoc_return") for pi in pure_policies(p)], axis=0)
            assert np.allclose(max_qoc_return(p), best, atol=1e-6)

    @pytest.mark.oracle
    def test_combined_is_below_both_parts(self, small_random_products):
        for p in small_random_products:
            combined = max_combined_prob(p)
            assert np.all(combined <= max_safety_prob(p) + PROBABILITY_TOLERANCE)
            assert np.all(combined <= max_buchi_prob(p) + PROBABILITY_TOLERANCE)


class TestCraftedRewards:
    """Crafted-reward values approach the probabilities as r shrinks."""

    RATES = (1e-1, 1e-2, 1e-3)
    SIZE = dict(num_states=8, num_actions=3)

    @pytest.mark.oracle
    @pytest.mark.parametrize("seed", RANDOM_SEEDS)
    def test_safety_gap_shrinks(self, seed):
        """The gap to the one-step safety backup is non-negative and shrinks with r."""
        p = random_product(seed, **self.SIZE)
        backup = p.transition @ max_safety_prob(p)
        gaps = []
        for r in self.RATES:
            gap = exact_crafted_q(p, "safety", r) - backup
            assert gap.min() >= -1e-8
            gaps.append(gap.max())
        assert gaps[0] + 1e-8 >= gaps[1] >= gaps[2] - 1e-8
        assert gaps[2] <= 0.02

    @pytest.mark.oracle
    @pytest.mark.parametrize("seed", RANDOM_SEEDS)
    def test_buchi_gap_is_small(self, seed):
        p = random_product(seed, **self.SIZE)
        backup = p.transition @ max_buchi_prob(p)
        assert np.max(np.abs(exact_crafted_q(p, "buchi", 1e-3) - backup)) <= 0.02

    @pytest.mark.oracle
    @pytest.mark.parametrize("seed", RANDOM_SEEDS)
    def test_threshold_sets_match(self, seed):
        p = random_product(seed, **self.SIZE)
        oracle_sets = safe_action_sets(p, max_safety_prob(p))
        learned = threshold_action_sets(p, exact_crafted_q(p, "safety", 1e-3), tau=1e-2)
        assert learned == oracle_sets

    @pytest.mark.oracle
    def test_case_study_threshold_sets(self, case_study_product, case_study_oracle):
        """Safety sets from crafted safety values, LTL sets from crafted Büchi values over them."""
        p = case_study_product
        safe = threshold_action_sets(p, exact_crafted_q(p, "safety", 1e-3), tau=1e-2)
        assert safe == case_study_oracle.safe_sets
        buchi = exact_crafted_q(p, "buchi", 1e-3, allowed=safe)
        assert threshold_action_sets(p, buchi, tau=1e-2, allowed=safe) == case_study_oracle.ltl_sets

    def test_reward_and_discount_tables(self, chain_product):
        reward, discount = crafted_rewards(chain_product, "buchi", 0.1)
        assert reward == pytest.approx([0.1, 0.1, 0.1])
        assert discount == pytest.approx([0.9, 0.9, 0.9])

    def test_invalid_arguments(self, chain_product):
        with pytest.raises(ValueError):
            exact_crafted_q(chain_product, "safety", 1.0)
        with pytest.raises(ValueError):
            crafted_rewards(chain_product, "liveness", 0.1)
        with pytest.raises(ValueError):
            exact_policy_value(chain_product, ProductPolicy.uniform(chain_product), "average_reward")

    def test_empty_allowed_set_names_the_state(self, example1_product):
        p = example1_product
        allowed = [frozenset(p.actions[x]) for x in range(p.num_states)]
        allowed[p.initial] = frozenset()
        with pytest.raises(EmptyActionSetError, match="<s0,0,0>"):
            exact_crafted_q(p, "safety", 0.1, allowed=allowed)
        with pytest.raises(EmptyActionSetError):
            max_qoc_q(p, allowed)

    def test_chain_values(self, chain_product):
        """Every state stays in B_psi forever: crafted safety value r * sum (1-r)^t = 1."""
        q = exact_crafted_q(chain_product, "safety", 0.2)
        assert state_values(chain_product, q) == pytest.approx([1.0, 1.0, 1.0])


class TestReturnAndMixing:
    """Return optimization within action sets and mixing policies."""

    @pytest.mark.oracle
    def test_example1_mixing(self, example1_product, example1_oracle):
        """Mixing keeps the Büchi objective while the return approaches the optimum."""
        rows = mixing_gap(example1_product, example1_oracle.ltl_sets, [0.5, 0.2, 0.1, 0.05])
        assert all(row["buchi_prob"] == pytest.approx(1.0) for row in rows)
        returns = [row["return"] for row in rows]
        assert all(later > earlier for earlier, later in zip(returns, returns[1:]))
        assert rows[0]["optimum"] == pytest.approx(1.0 / (1.0 - example1_product.gamma))
        assert all(row["gap"] > 0 for row in rows)

    @pytest.mark.oracle
    def test_example1_without_the_jump(self, example1_product):
        """Alternating without taking the ε-jump: return 1 / (1 - gamma^2), Büchi never met."""
        p = example1_product
        choice = [p.mdp.action_id("beta1" if s == 0 else "return") for s, _, _ in p.states]
        policy = ProductPolicy.deterministic(p, choice)
        gamma = p.gamma
        assert exact_policy_value(p, policy, "qoc_return")[p.initial] == pytest.approx(1.0 / (1.0 - gamma**2))
        assert exact_policy_value(p, policy, "buchi_prob")[p.initial] == pytest.approx(0.0)

    @pytest.mark.oracle
    def test_example1_buchi(self, example1_product, example1_oracle):
        assert example1_oracle.pr_buchi_given_safe[example1_product.initial] == pytest.approx(1.0)
        assert example1_oracle.pr_safety == pytest.approx(np.ones(example1_product.num_states))

    def test_chain_return(self, chain_product):
        """Reward 1 from the third state on: gamma^2 / (1 - gamma)."""
        assert max_qoc_return(chain_product)[0] == pytest.approx(0.9**2 / 0.1)

    def test_greedy_choice_prefers_lowest_id_on_ties(self, example1_product):
        p = example1_product
        q = np.zeros(p.num_pairs)
        choice = greedy_choice(p, q, [p.actions[x] for x in range(p.num_states)])
        assert choice == [min(p.actions[x]) for x in range(p.num_states)]


class TestGraphStructure:
    """End components and bottom SCCs."""

    def test_chain_mec(self, chain_product):
        mecs = mec_decomposition(chain_product)
        assert mecs.components == [frozenset({2})]
        assert mecs.actions == [{2: frozenset({0})}]

    @pytest.mark.oracle
    def test_mecs_are_closed(self, case_study_product):
        """Each kept action keeps all of its mass inside its component."""
        p = case_study_product
        mecs = mec_decomposition(p)
        assert len(mecs) > 0
        for component, actions in zip(mecs.components, mecs.actions):
            for x, kept in actions.items():
                assert kept
                for action in kept:
                    assert all(t in component for t, _ in p.successors(p.pair(x, action)))

    def test_absorbing_cells_are_end_components(self, case_study_product):
        """Absorbing cells are end components unless the LDBA is about to fall into its sink."""
        p = case_study_product
        membership = mec_decomposition(p).membership
        trap = p.mdp.state_of((4, 2))
        for q_phi in (p.ldba.initial, p.ldba.implicit_sink):
            xs = p.find(trap, q_phi=q_phi)
            assert xs
            assert all(x in membership for x in xs)

    def test_bottom_sccs(self):
        chain = sparse.csr_matrix(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]))
        assert bottom_sccs(chain) == [frozenset({2})]

    def test_ltl_sets_within_allowed(self, small_random_products):
        for p in small_random_products:
            safe_sets = safe_action_sets(p, max_safety_prob(p))
            ltl_sets = ltl_action_sets(p, safe_sets, max_buchi_prob(p, safe_sets))
            assert all(ltl and ltl <= safe for ltl, safe in zip(ltl_sets, safe_sets))
