"""Exact analysis of a known product MDP.

Everything here reads the transition matrix directly, so it is only meant for
models small enough to enumerate. Results serve as ground truth for the learner:
maximum probabilities of staying safe and of visiting B_phi infinitely often, the
lexicographic action sets derived from them, values under crafted rewards, and
exact evaluation of fixed policies.

Action sets are lists indexed by product state holding frozensets of product
action ids. ``allowed=None`` always means every allowed product action.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .config import (
    ACTION_SET_TOLERANCE,
    MAX_POLICY_ITERATIONS,
    MAX_VALUE_ITERATIONS,
    VALUE_ITERATION_TOLERANCE,
)
from .errors import EmptyActionSetError
from .models import OracleResult
from .product import ProductMdp, ProductPolicy

logger = logging.getLogger(__name__)

ActionSets = list[frozenset[int]]

OBJECTIVES = ("qoc_return", "safety_prob", "buchi_prob")
CRAFTED_KINDS = ("safety", "buchi")


# Pair-level helpers

def _pair_mask(product: ProductMdp, allowed: Optional[Sequence[Iterable[int]]]) -> np.ndarray:
    if allowed is None:
        return np.ones(product.num_pairs, dtype=bool)
    mask = np.zeros(product.num_pairs, dtype=bool)
    for x, actions in enumerate(allowed):
        for action in actions:
            mask[product.pair(x, action)] = True
    return mask


def _any_per_state(product: ProductMdp, pair_flags: np.ndarray) -> np.ndarray:
    return np.add.reduceat(pair_flags.astype(np.int64), product.offsets[:-1]) > 0


def _max_per_state(product: ProductMdp, q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(np.where(mask, q, -np.inf), product.offsets[:-1])


def _leaves(product: ProductMdp, inside: np.ndarray) -> np.ndarray:
    """Pairs with positive probability of leaving ``inside``."""
    return product.transition @ (~inside).astype(float) > 0


def _can_reach(product: ProductMdp, mask: np.ndarray, target: np.ndarray, avoid: np.ndarray) -> np.ndarray:
    """States with a path to ``target`` through non-avoided states using masked pairs."""
    reached = target.copy()
    while True:
        hits = (product.transition @ reached.astype(float) > 0) & mask
        grown = reached | (_any_per_state(product, hits) & ~avoid)
        if np.array_equal(grown, reached):
            return reached
        reached = grown


def _almost_sure(product: ProductMdp, mask: np.ndarray, target: np.ndarray, avoid: np.ndarray) -> np.ndarray:
    """States that reach ``target`` with probability 1 under some policy."""
    candidates = ~avoid | target
    while True:
        staying = mask & ~_leaves(product, candidates)
        reached = _can_reach(product, staying, target, ~candidates)
        if np.array_equal(reached, candidates):
            return candidates
        candidates = reached


def _max_reach(
    product: ProductMdp,
    mask: np.ndarray,
    target: np.ndarray,
    avoid: np.ndarray,
    notes: Optional[dict],
    key: str,
) -> np.ndarray:
    """Maximum probability of reaching ``target`` without entering ``avoid``.

    Exact 0 and 1 come from graph analysis; value iteration from below fills in
    the remaining states.
    """
    avoid = avoid & ~target
    zero = ~_can_reach(product, mask, target, avoid)
    one = _almost_sure(product, mask, target, avoid)
    unknown = ~(zero | one)
    values = one.astype(float)

    iterations, residual = 0, 0.0
    if unknown.any():
        while iterations < MAX_VALUE_ITERATIONS:
            iterations += 1
            updated = _max_per_state(product, product.transition @ values, mask)
            residual = float(np.max(np.abs(updated[unknown] - values[unknown])))
            values[unknown] = updated[unknown]
            if residual <= VALUE_ITERATION_TOLERANCE:
                break
        else:
            logger.warning("%s: value iteration hit the cap of %d iterations", key, MAX_VALUE_ITERATIONS)

    logger.debug(
        "%s: %d zero, %d one, %d iterated (%d iterations, residual %.3g)",
        key, int(zero.sum()), int(one.sum()), int(unknown.sum()), iterations, residual,
    )
    if notes is not None:
        notes[f"{key}_iterations"] = iterations
        notes[f"{key}_residual"] = residual
    return values


def _argmax_sets(product: ProductMdp, q: np.ndarray, mask: np.ndarray) -> ActionSets:
    best = _max_per_state(product, q, mask)
    sets = []
    for x in range(product.num_states):
        pairs = product.pairs_of(x)
        sets.append(frozenset(
            int(product.pair_action[i]) for i in pairs
            if mask[i] and q[i] >= best[x] - ACTION_SET_TOLERANCE
        ))
    return sets


# Safety

def max_safety_prob(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Maximum probability of staying in B_psi forever, per product state.

    The states that can stay safe surely are the greatest set W inside B_psi where
    some action keeps all of its mass in W; the rest of the value is the maximum
    probability of reaching W through B_psi.
    """
    mask = _pair_mask(product, allowed)
    safe = product.safe.copy()
    winning = safe.copy()
    while True:
        keeps = mask & ~_leaves(product, winning)
        shrunk = winning & _any_per_state(product, keeps)
        if np.array_equal(shrunk, winning):
            break
        winning = shrunk
    return _max_reach(product, mask, winning, ~safe, notes, "safety")


def safe_action_sets(
    product: ProductMdp,
    pr_safety: np.ndarray,
    allowed: Optional[Sequence[Iterable[int]]] = None,
) -> ActionSets:
    """Actions attaining the maximum one-step safety backup.

    Outside B_psi every action is equally (un)safe and the whole allowed set is kept.
    """
    mask = _pair_mask(product, allowed)
    sets = _argmax_sets(product, product.transition @ pr_safety, mask)
    for x in np.flatnonzero(~product.safe):
        sets[x] = frozenset(int(product.pair_action[i]) for i in product.pairs_of(int(x)) if mask[i])
    return sets


# End components and Büchi objectives

@dataclass
class MecDecomposition:
    """Maximal end components with the actions that keep each one closed."""
    components: list[frozenset[int]]
    actions: list[dict[int, frozenset[int]]]

    @property
    def membership(self) -> dict[int, int]:
        return {x: i for i, component in enumerate(self.components) for x in component}

    def __len__(self) -> int:
        return len(self.components)

    def union(self, selected: Optional[Iterable[int]] = None) -> set[int]:
        chosen = range(len(self.components)) if selected is None else selected
        return set().union(*(self.components[i] for i in chosen)) if self.components else set()


def mec_decomposition(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    states: Optional[np.ndarray] = None,
) -> MecDecomposition:
    """Decompose the (restricted) product into maximal end components.

    Alternates two steps until nothing changes: drop actions that can leave the
    current block of their state (and states left without actions), then split
    blocks into strongly connected components of what remains.

    Args:
        product: Product MDP
        allowed: Optional per-state action restriction
        states: Optional boolean mask of states to consider
    """
    mask = _pair_mask(product, allowed)
    keep = np.ones(product.num_states, dtype=bool) if states is None else states.copy()
    successors = [product.transition.indices[product.transition.indptr[i]:product.transition.indptr[i + 1]]
                  for i in range(product.num_pairs)]

    enabled: dict[int, set[int]] = {
        x: {i for i in product.pairs_of(x) if mask[i]}
        for x in np.flatnonzero(keep).tolist()
    }
    block = {x: 0 for x in enabled}

    while True:
        changed = True
        pruned = False
        while changed:
            changed = False
            for x in list(enabled):
                closed = {i for i in enabled[x] if all(block.get(int(y)) == block[x] for y in successors[i])}
                if closed != enabled[x]:
                    changed = pruned = True
                    enabled[x] = closed
                if not closed:
                    changed = pruned = True
                    del enabled[x]
                    del block[x]

        graph = nx.DiGraph()
        graph.add_nodes_from(enabled)
        for x, pairs in enabled.items():
            graph.add_edges_from((x, int(y)) for i in pairs for y in successors[i])
        refined = {}
        for number, component in enumerate(nx.strongly_connected_components(graph)):
            for x in component:
                refined[x] = number
        split = len(set(refined.values())) != len(set(block.values()))
        block = refined
        if not (pruned or split):
            break

    grouped: dict[int, set[int]] = {}
    for x, number in block.items():
        grouped.setdefault(number, set()).add(x)
    components, actions = [], []
    for members in sorted(grouped.values(), key=min):
        components.append(frozenset(members))
        actions.append({
            x: frozenset(int(product.pair_action[i]) for i in enabled[x])
            for x in sorted(members)
        })
    logger.debug("MEC decomposition: %d components over %d states", len(components), len(block))
    return MecDecomposition(components=components, actions=actions)


def _accepting_mec_states(product: ProductMdp, mecs: MecDecomposition) -> np.ndarray:
    target = np.zeros(product.num_states, dtype=bool)
    for component in mecs.components:
        members = np.fromiter(component, dtype=np.int64)
        if product.accepting[members].any():
            target[members] = True
    return target


def max_buchi_prob(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Maximum probability of visiting B_phi infinitely often using only ``allowed`` actions."""
    mecs = mec_decomposition(product, allowed)
    target = _accepting_mec_states(product, mecs)
    nowhere = np.zeros(product.num_states, dtype=bool)
    return _max_reach(product, _pair_mask(product, allowed), target, nowhere, notes, "buchi")


def ltl_action_sets(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]],
    pr_buchi: np.ndarray,
) -> ActionSets:
    """Subset of ``allowed`` attaining the maximum one-step Büchi backup."""
    return _argmax_sets(product, product.transition @ pr_buchi, _pair_mask(product, allowed))


def max_combined_prob(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Maximum probability of the single objective "always safe and B_phi infinitely often"."""
    mecs = mec_decomposition(product, allowed, states=product.safe)
    target = _accepting_mec_states(product, mecs)
    return _max_reach(product, _pair_mask(product, allowed), target, ~product.safe, notes, "combined")


def combined_action_sets(
    product: ProductMdp,
    pr_combined: np.ndarray,
    allowed: Optional[Sequence[Iterable[int]]] = None,
) -> ActionSets:
    return _argmax_sets(product, product.transition @ pr_combined, _pair_mask(product, allowed))


# Discounted control by policy iteration

def _policy_iteration(
    product: ProductMdp,
    mask: np.ndarray,
    pair_reward: np.ndarray,
    next_reward: np.ndarray,
    next_discount: np.ndarray,
    notes: Optional[dict],
    key: str,
) -> np.ndarray:
    """Optimal q for q(x,a) = c(x,a) + sum_x' P(x,a,x') [R(x') + G(x') max_a' q(x',a')].

    Each evaluation is an exact sparse solve; improvement switches only on a strict
    gain so the iteration cannot cycle between tied actions.

    Raises:
        EmptyActionSetError: when ``mask`` leaves some state without an action
    """
    n = product.num_states
    empty = np.flatnonzero(~_any_per_state(product, mask))
    if len(empty):
        raise EmptyActionSetError(product.state_name(int(empty[0])))
    choice = np.array([
        next(i for i in product.pairs_of(x) if mask[i]) for x in range(n)
    ], dtype=np.int64)
    identity = sparse.identity(n, format="csr")
    scale = sparse.diags(next_discount)

    for iteration in range(1, MAX_POLICY_ITERATIONS + 1):
        chosen = product.transition[choice]
        values = np.atleast_1d(spsolve(
            (identity - chosen @ scale).tocsc(),
            pair_reward[choice] + chosen @ next_reward,
        ))
        q = pair_reward + product.transition @ (next_reward + next_discount * values)
        best = _max_per_state(product, q, mask)
        improved = choice.copy()
        for x in np.flatnonzero(best > q[choice] + VALUE_ITERATION_TOLERANCE).tolist():
            improved[x] = next(i for i in product.pairs_of(x) if mask[i] and q[i] >= best[x] - VALUE_ITERATION_TOLERANCE)
        if np.array_equal(improved, choice):
            break
        choice = improved
    else:
        logger.warning("%s: policy iteration hit the cap of %d iterations", key, MAX_POLICY_ITERATIONS)

    backup = pair_reward + product.transition @ (next_reward + next_discount * _max_per_state(product, q, mask))
    residual = float(np.max(np.abs(backup - q))) if len(q) else 0.0
    logger.debug("%s: %d policy iterations, Bellman residual %.3g", key, iteration, residual)
    if notes is not None:
        notes[f"{key}_iterations"] = iteration
        notes[f"{key}_residual"] = residual
    return q


def crafted_rewards(product: ProductMdp, which: str, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-state (reward, discount) paid on entering a state.

    safety: (r, 1 - r) inside B_psi, (0, 0) outside.
    buchi:  (r, 1 - r) inside B_phi, (0, 1 - r^2) outside.
    """
    if which == "safety":
        flags = product.safe
        outside = 0.0
    elif which == "buchi":
        flags = product.accepting
        outside = 1.0 - r * r
    else:
        raise ValueError(f"unknown crafted reward {which!r}; expected one of {CRAFTED_KINDS}")
    reward = np.where(flags, r, 0.0)
    discount = np.where(flags, 1.0 - r, outside)
    return reward, discount


def exact_crafted_q(
    product: ProductMdp,
    which: str,
    r: float,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Optimal state-action values under the crafted safety or Büchi rewards.

    Returns one value per state-action pair; the maximum in the Bellman backup
    ranges over ``allowed`` actions of the successor.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"crafted reward must lie in (0, 1), got {r}")
    reward, discount = crafted_rewards(product, which, r)
    return _policy_iteration(
        product,
        _pair_mask(product, allowed),
        np.zeros(product.num_pairs),
        reward,
        discount,
        notes,
        f"crafted_{which}",
    )


def threshold_action_sets(
    product: ProductMdp,
    q: np.ndarray,
    tau: float,
    allowed: Optional[Sequence[Iterable[int]]] = None,
) -> ActionSets:
    """Allowed actions whose value is within ``tau`` of the best allowed one."""
    mask = _pair_mask(product, allowed)
    best = _max_per_state(product, q, mask)
    return [
        frozenset(int(product.pair_action[i]) for i in product.pairs_of(x) if mask[i] and best[x] - q[i] <= tau)
        for x in range(product.num_states)
    ]


def state_values(product: ProductMdp, q: np.ndarray, allowed: Optional[Sequence[Iterable[int]]] = None) -> np.ndarray:
    return _max_per_state(product, q, _pair_mask(product, allowed))


def max_qoc_q(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Optimal discounted-return q per pair, counting R of the current state first."""
    return _policy_iteration(
        product,
        _pair_mask(product, allowed),
        product.rewards[product.pair_state],
        np.zeros(product.num_states),
        np.full(product.num_states, product.gamma),
        notes,
        "qoc",
    )


def max_qoc_return(
    product: ProductMdp,
    allowed: Optional[Sequence[Iterable[int]]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Supremum of the expected discounted return per state over policies using ``allowed``."""
    return state_values(product, max_qoc_q(product, allowed, notes), allowed)


# Fixed policies

def policy_chain(product: ProductMdp, policy: ProductPolicy) -> sparse.csr_matrix:
    """State-to-state transition matrix of the Markov chain a policy induces."""
    return (policy.matrix(product) @ product.transition).tocsr()


def bottom_sccs(chain: sparse.csr_matrix) -> list[frozenset[int]]:
    """Bottom strongly connected components of a Markov chain."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(chain.shape[0]))
    rows, cols = chain.nonzero()
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    condensed = nx.condensation(graph)
    return [
        frozenset(condensed.nodes[node]["members"])
        for node in condensed.nodes
        if condensed.out_degree(node) == 0
    ]


def _chain_reach(
    chain: sparse.csr_matrix,
    target: np.ndarray,
    avoid: np.ndarray,
    notes: Optional[dict],
    key: str,
) -> np.ndarray:
    n = chain.shape[0]
    avoid = avoid & ~target
    reached = target.copy()
    while True:
        grown = reached | ((chain @ reached.astype(float) > 0) & ~avoid)
        if np.array_equal(grown, reached):
            break
        reached = grown
    maybe = reached & ~target
    values = target.astype(float)
    residual = 0.0
    if maybe.any():
        index = np.flatnonzero(maybe)
        inner = chain[index][:, index]
        rhs = chain[index] @ target.astype(float)
        system = (sparse.identity(len(index), format="csr") - inner).tocsc()
        solution = np.atleast_1d(spsolve(system, rhs))
        residual = float(np.max(np.abs(system @ solution - rhs)))
        values[index] = np.clip(solution, 0.0, 1.0)
    if notes is not None:
        notes[f"{key}_residual"] = residual
    logger.debug("%s: %d of %d states solved, residual %.3g", key, int(maybe.sum()), n, residual)
    return values


def reach_probability(
    product: ProductMdp,
    policy: ProductPolicy,
    targets: Iterable[int],
    avoid: Optional[Iterable[int]] = None,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Probability under ``policy`` of reaching ``targets`` (before ``avoid``), per state."""
    target = np.zeros(product.num_states, dtype=bool)
    target[list(targets)] = True
    blocked = np.zeros(product.num_states, dtype=bool)
    if avoid is not None:
        blocked[list(avoid)] = True
    return _chain_reach(policy_chain(product, policy), target, blocked, notes, "reach")


def exact_policy_value(
    product: ProductMdp,
    policy: ProductPolicy,
    objective: str,
    notes: Optional[dict] = None,
) -> np.ndarray:
    """Exact value of a fixed memoryless product policy, per product state.

    qoc_return: expected sum_t gamma^t R(x_t) from t = 0.
    safety_prob: probability that every visited state is in B_psi.
    buchi_prob: probability of visiting B_phi infinitely often.
    """
    chain = policy_chain(product, policy)
    n = product.num_states
    if objective == "qoc_return":
        system = (sparse.identity(n, format="csr") - product.gamma * chain).tocsc()
        values = np.atleast_1d(spsolve(system, product.rewards))
        if notes is not None:
            notes["qoc_return_residual"] = float(np.max(np.abs(system @ values - product.rewards)))
        return values
    if objective == "safety_prob":
        target = np.zeros(n, dtype=bool)
        for component in bottom_sccs(chain):
            members = np.fromiter(component, dtype=np.int64)
            if product.safe[members].all():
                target[members] = True
        return _chain_reach(chain, target, ~product.safe, notes, "safety_prob")
    if objective == "buchi_prob":
        target = np.zeros(n, dtype=bool)
        for component in bottom_sccs(chain):
            members = np.fromiter(component, dtype=np.int64)
            if product.accepting[members].any():
                target[members] = True
        return _chain_reach(chain, target, np.zeros(n, dtype=bool), notes, "buchi_prob")
    raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")


def greedy_choice(product: ProductMdp, q: np.ndarray, sets: ActionSets) -> list[int]:
    """Per state, the lowest-id action of ``sets[x]`` maximizing ``q``."""
    choice = []
    for x in range(product.num_states):
        ranked = sorted(sets[x])
        values = [q[product.pair(x, a)] for a in ranked]
        choice.append(ranked[int(np.argmax(values))])
    return choice


def mixing_gap(
    product: ProductMdp,
    sets: ActionSets,
    upsilons: Iterable[float],
    state: Optional[int] = None,
) -> list[dict]:
    """Exact return of upsilon-mixing policies over ``sets`` against the best return.

    For each upsilon the policy plays the return-optimal action within ``sets`` with
    probability 1 - upsilon and a uniform action of ``sets`` otherwise.
    """
    x = product.initial if state is None else state
    q = max_qoc_q(product, sets)
    optimum = float(state_values(product, q, sets)[x])
    preferred = greedy_choice(product, q, sets)
    rows = []
    for upsilon in upsilons:
        policy = ProductPolicy.mixing(product, sets, preferred, upsilon)
        value = float(exact_policy_value(product, policy, "qoc_return")[x])
        buchi = float(exact_policy_value(product, policy, "buchi_prob")[x])
        rows.append({
            "upsilon": float(upsilon),
            "return": value,
            "optimum": optimum,
            "gap": optimum - value,
            "buchi_prob": buchi,
        })
    return rows


# Bundled report

def run_oracle(product: ProductMdp, combined: bool = True, qoc: bool = True) -> OracleResult:
    """Full lexicographic analysis of a product.

    Safety first, then Büchi over the safe action sets, then (optionally) the best
    return over the resulting sets and the single combined objective.
    """
    notes: dict[str, float] = {}
    pr_safety = max_safety_prob(product, notes=notes)
    safe_sets = safe_action_sets(product, pr_safety)
    pr_buchi = max_buchi_prob(product, safe_sets, notes=notes)
    ltl_sets = ltl_action_sets(product, safe_sets, pr_buchi)
    result = OracleResult(
        pr_safety=pr_safety,
        pr_buchi_given_safe=pr_buchi,
        safe_sets=safe_sets,
        ltl_sets=ltl_sets,
        pr_combined=max_combined_prob(product, notes=notes) if combined else None,
        max_return=max_qoc_return(product, ltl_sets, notes=notes) if qoc else None,
        notes=notes,
    )
    x = product.initial
    logger.info(
        "Oracle at the initial state: Pr_max(safe) = %.6f, Pr_max(buchi | safe sets) = %.6f",
        pr_safety[x], pr_buchi[x],
    )
    problems = result.violations()
    if problems:
        logger.warning("Oracle result inconsistent: %s", "; ".join(problems))
    return result


def oracle_report(result: OracleResult, product: ProductMdp) -> dict:
    report = result.to_dict(
        [product.state_name(x) for x in range(product.num_states)],
        product.action_label,
    )
    report["initial"] = product.state_name(product.initial)
    return report


def write_oracle_report(result: OracleResult, product: ProductMdp, path) -> Path:
    """Write the per-state oracle report as JSON."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(oracle_report(result, product), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Oracle report written to %s", target)
    return target
