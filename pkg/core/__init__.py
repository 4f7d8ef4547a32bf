"""Core module for lexicographic safety / LTL / return learning."""

from .models import (
    GridSpec,
    Schedule,
    Hyper,
    Transition,
    EvaluationStats,
    OracleResult,
    ExperimentConfig,
)
from .mdp import (
    LabeledMdp,
    validate_mdp,
    make_mdp,
    build_gridworld,
    case_study_grid,
    toy_grid,
    fixture_example1,
    sample_transition,
    mdp_return,
    is_path,
)
from .environment import (
    load_environment,
    try_load_environment,
    write_environment,
    dumps_environment,
)
from .ltl import (
    parse_ltl,
    print_ltl,
    propositions,
    to_pnf,
    is_syntactic_safety,
    evaluate_lasso,
)
from .automata import (
    SafetyAutomaton,
    Ldba,
    safety_to_automaton,
    validate_suitable,
    complete_with_sink,
    trivial_safety_automaton,
    trivial_ldba,
)
from .hoa import parse_hoa, read_hoa, print_hoa
from .product import (
    ProductMdp,
    ProductPolicy,
    FiniteMemoryPolicy,
    build_product,
    step_product,
    induce_policy,
    evaluate_induced,
)
from .learn import (
    QTriple,
    update_qs,
    near_optimal_sets,
    choose_action,
    greedy_policy,
    train,
    evaluate,
    save_checkpoint,
    load_checkpoint,
)
from .oracle import (
    max_safety_prob,
    safe_action_sets,
    mec_decomposition,
    max_buchi_prob,
    ltl_action_sets,
    max_combined_prob,
    exact_crafted_q,
    max_qoc_return,
    exact_policy_value,
    mixing_gap,
    run_oracle,
)
from .render import policy_export, render_text, render_svg, render_policy
from .experiment import translate, prepare, run, run_many, verify, oracle_only, read_run, find_runs

__all__ = [
    # Models
    "GridSpec",
    "Schedule",
    "Hyper",
    "Transition",
    "EvaluationStats",
    "OracleResult",
    "ExperimentConfig",
    # Labeled MDPs
    "LabeledMdp",
    "validate_mdp",
    "make_mdp",
    "build_gridworld",
    "case_study_grid",
    "toy_grid",
    "fixture_example1",
    "sample_transition",
    "mdp_return",
    "is_path",
    # Environment files
    "load_environment",
    "try_load_environment",
    "write_environment",
    "dumps_environment",
    # LTL
    "parse_ltl",
    "print_ltl",
    "propositions",
    "to_pnf",
    "is_syntactic_safety",
    "evaluate_lasso",
    # Automata
    "SafetyAutomaton",
    "Ldba",
    "safety_to_automaton",
    "validate_suitable",
    "complete_with_sink",
    "trivial_safety_automaton",
    "trivial_ldba",
    "parse_hoa",
    "read_hoa",
    "print_hoa",
    # Product
    "ProductMdp",
    "ProductPolicy",
    "FiniteMemoryPolicy",
    "build_product",
    "step_product",
    "induce_policy",
    "evaluate_induced",
    # Learner
    "QTriple",
    "update_qs",
    "near_optimal_sets",
    "choose_action",
    "greedy_policy",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    # Oracle
    "max_safety_prob",
    "safe_action_sets",
    "mec_decomposition",
    "max_buchi_prob",
    "ltl_action_sets",
    "max_combined_prob",
    "exact_crafted_q",
    "max_qoc_return",
    "exact_policy_value",
    "mixing_gap",
    "run_oracle",
    # Renders
    "policy_export",
    "render_text",
    "render_svg",
    "render_policy",
    # Experiments
    "translate",
    "prepare",
    "run",
    "run_many",
    "verify",
    "oracle_only",
    "read_run",
    "find_runs",
]
