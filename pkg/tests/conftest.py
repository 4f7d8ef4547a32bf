"""Shared fixtures for the lexicographic learning tests."""

from pathlib import Path

import numpy as np
import pytest

from core.automata import safety_to_automaton, trivial_ldba, trivial_safety_automaton
from core.hoa import read_hoa
from core.learn import QTriple
from core.ltl import parse_ltl
from core.mdp import build_gridworld, case_study_grid, fixture_example1, make_mdp, toy_grid
from core.models import Hyper
from core.oracle import exact_crafted_q, max_qoc_q, run_oracle
from core.product import build_product

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
CONFIGS = ROOT / "configs"

CASE_STUDY_SAFETY = "[]!(d & X d)"
TOY_SAFETY = "[](!u)"

# Seeds of the random products used by the brute-force and convergence checks
RANDOM_SEEDS = list(range(10))

# Crafted rewards and thresholds under which exact tables reproduce the oracle sets
EXACT_HYPER = Hyper(r_safety=1e-4, r_ltl=1e-4, epsilon=0.0, upsilon=0.0, tau_safety=1e-2, tau_ltl=1e-2)


def make_random_mdp(
    seed: int,
    num_states: int = 6,
    num_actions: int = 2,
    atomic_props: tuple[str, ...] = ("g", "u"),
    gamma: float = 0.9,
):
    """Random labeled MDP with coarse probabilities.

    Every action has one successor (probability 1) or two (0.5 each), so optimal
    probabilities are small rationals and ties are exact.
    """
    rng = np.random.default_rng(seed)
    actions, transitions = [], {}
    for s in range(num_states):
        allowed = tuple(sorted(rng.choice(num_actions, size=int(rng.integers(1, num_actions + 1)), replace=False).tolist()))
        actions.append(allowed)
        for a in allowed:
            if rng.random() < 0.5:
                transitions[(s, a)] = ((int(rng.integers(num_states)), 1.0),)
            else:
                first, second = rng.choice(num_states, size=2, replace=False).tolist()
                transitions[(s, a)] = tuple(sorted(((int(first), 0.5), (int(second), 0.5))))
    labels = tuple(
        frozenset(p for p in atomic_props if rng.random() < 0.35) for _ in range(num_states)
    )
    return make_mdp(
        state_names=tuple(f"s{i}" for i in range(num_states)),
        action_names=tuple(f"a{i}" for i in range(num_actions)),
        actions=tuple(actions),
        transitions=transitions,
        rewards=tuple(float(rng.integers(0, 2)) for _ in range(num_states)),
        labels=labels,
        atomic_props=atomic_props,
        gamma=gamma,
        initial=0,
    )


def make_chain_mdp(length: int = 3, label_last: str = "g", gamma: float = 0.9):
    """Deterministic chain s0 -> s1 -> ... -> s{n-1} looping on the last state."""
    transitions = {(s, 0): ((min(s + 1, length - 1), 1.0),) for s in range(length)}
    return make_mdp(
        state_names=tuple(f"s{i}" for i in range(length)),
        action_names=("next",),
        actions=tuple((0,) for _ in range(length)),
        transitions=transitions,
        rewards=tuple(1.0 if s == length - 1 else 0.0 for s in range(length)),
        labels=tuple(frozenset({label_last}) if s == length - 1 else frozenset() for s in range(length)),
        atomic_props=(label_last,),
        gamma=gamma,
        initial=0,
    )


def random_product(seed: int, **kwargs):
    """Random MDP x safety automaton of []!u x LDBA of []<>g."""
    mdp = make_random_mdp(seed, **kwargs)
    safety = safety_to_automaton(parse_ltl(TOY_SAFETY, mdp.atomic_props))
    return build_product(mdp, safety, read_hoa(FIXTURES / "toy_ldba.hoa"))


def oracle_exact_tables(product, hyper=EXACT_HYPER):
    """Learner tables filled with exact crafted-reward values, every pair visited once.

    Q_psi_phi is optimal over the oracle safe sets and Q^R over the oracle LTL sets.
    """
    oracle = run_oracle(product)
    q = QTriple.zeros(product)
    q.safety[:] = exact_crafted_q(product, "safety", hyper.r_safety)
    q.ltl[:] = exact_crafted_q(product, "buchi", hyper.r_ltl, allowed=oracle.safe_sets)
    q.qoc[:] = max_qoc_q(product, oracle.ltl_sets)
    q.visits[:] = 1
    return q, oracle


def cell_states(product, cell, safe_only=True):
    """Product states sitting on a grid cell (only B_psi states by default)."""
    xs = product.find(product.mdp.state_of(cell))
    return [x for x in xs if product.safe[x]] if safe_only else xs


def env_moves(product, actions):
    """Names of the environment moves in an action set (ε-actions dropped)."""
    return {product.action_names[a] for a in actions if not product.is_epsilon(a)}


@pytest.fixture(scope="session")
def case_study_mdp():
    return build_gridworld(case_study_grid())


@pytest.fixture(scope="session")
def case_study_product(case_study_mdp):
    """Case-study grid x []!(d & X d) x the bundled LDBA."""
    safety = safety_to_automaton(parse_ltl(CASE_STUDY_SAFETY, case_study_mdp.atomic_props))
    return build_product(case_study_mdp, safety, read_hoa(FIXTURES / "case_study_ldba.hoa"))


@pytest.fixture(scope="session")
def toy_product():
    """3x3 deterministic grid x [](!u) x []<>g."""
    mdp = build_gridworld(toy_grid())
    safety = safety_to_automaton(parse_ltl(TOY_SAFETY, mdp.atomic_props))
    return build_product(mdp, safety, read_hoa(FIXTURES / "toy_ldba.hoa"))


@pytest.fixture(scope="session")
def example1_product():
    """Two-state return-vs-Büchi MDP x true x []<>b with an ε-jump."""
    return build_product(fixture_example1(), trivial_safety_automaton(), read_hoa(FIXTURES / "example1_ldba.hoa"))


@pytest.fixture
def chain_product():
    """Deterministic 3-chain with trivial automata."""
    return build_product(make_chain_mdp(), trivial_safety_automaton(), trivial_ldba())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
