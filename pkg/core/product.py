"""Product of a labeled MDP, a safety automaton and an LDBA.

Product states are triples ``(s, q_psi, q_phi)`` explored from the initial triple;
only reachable triples are materialized. Product actions are the MDP actions (same
ids) followed by one ε-action per LDBA state: ``eps_q`` has id ``|A| + q`` and moves
the LDBA component to ``q`` while the environment and the safety automaton stay put.
An MDP action leaving ``s`` advances both automata on ``L(s)``, the label of the
state being left.

State-action pairs are numbered contiguously: the pairs of product state ``x`` are
``offsets[x] .. offsets[x + 1] - 1`` in the order of ``actions[x]``. ``transition``
is the (pairs x states) sparse matrix of product probabilities.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy import sparse

from .automata import Ldba, SafetyAutomaton, validate_suitable
from .config import EPSILON_ACTION_PREFIX, PROBABILITY_SUM_TOLERANCE
from .errors import (
    AlphabetMismatchError,
    DisallowedActionError,
    MdpValidationError,
    NotSafetyFormulaError,
    UnsuitableLdbaError,
)
from .mdp import LabeledMdp, sample_transition, validate_mdp
from .models import EvaluationStats

logger = logging.getLogger(__name__)

ProductState = tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class ProductMdp:
    """Reachable product MDP in flat array form."""
    mdp: LabeledMdp
    safety: SafetyAutomaton
    ldba: Ldba
    states: tuple[ProductState, ...]
    index: dict[ProductState, int]
    action_names: tuple[str, ...]
    actions: tuple[tuple[int, ...], ...]
    offsets: np.ndarray            # int, len num_states + 1
    pair_state: np.ndarray         # int, product state of each pair
    pair_action: np.ndarray        # int, product action of each pair
    transition: sparse.csr_matrix  # pairs x states
    cumulative: np.ndarray         # running row sums aligned with transition.data
    rewards: np.ndarray            # R(s) per product state
    safe: np.ndarray               # bool, q_psi accepting
    accepting: np.ndarray          # bool, q_phi accepting
    initial: int = 0

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_pairs(self) -> int:
        return len(self.pair_state)

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    @property
    def full_size(self) -> int:
        """|S| * |Q_psi| * |Q_phi| over the declared automata, before reachability pruning."""
        return self.mdp.num_states * self.safety.num_states * self.ldba.declared_size

    def is_epsilon(self, action: int) -> bool:
        return action >= self.mdp.num_actions

    def epsilon_action(self, ldba_state: int) -> int:
        return self.mdp.num_actions + ldba_state

    def pair(self, state: int, action: int) -> int:
        """Pair index of (state, action).

        Raises:
            DisallowedActionError: If the action is not allowed in the state
        """
        try:
            position = self.actions[state].index(action)
        except ValueError:
            raise DisallowedActionError(self.state_name(state), self.action_label(action)) from None
        return int(self.offsets[state]) + position

    def pairs_of(self, state: int) -> range:
        return range(int(self.offsets[state]), int(self.offsets[state + 1]))

    def successors(self, pair: int) -> list[tuple[int, float]]:
        start, end = self.transition.indptr[pair], self.transition.indptr[pair + 1]
        return list(zip(self.transition.indices[start:end].tolist(), self.transition.data[start:end].tolist()))

    def state_name(self, state: int) -> str:
        s, q_psi, q_phi = self.states[state]
        return f"<{self.mdp.state_names[s]},{q_psi},{q_phi}>"

    def action_label(self, action: int) -> str:
        if 0 <= action < len(self.action_names):
            return self.action_names[action]
        return str(action)

    def find(self, env_state: int, q_psi: Optional[int] = None, q_phi: Optional[int] = None) -> list[int]:
        """Product states with the given components (None matches anything)."""
        return [
            x for x, (s, a, b) in enumerate(self.states)
            if s == env_state and (q_psi is None or a == q_psi) and (q_phi is None or b == q_phi)
        ]


def build_product(mdp: LabeledMdp, safety: SafetyAutomaton, ldba: Ldba) -> ProductMdp:
    """Build the reachable product MDP.

    Raises:
        AlphabetMismatchError: If an automaton reads a proposition the MDP lacks
        MdpValidationError, UnsuitableLdbaError, NotSafetyFormulaError: Invalid inputs
    """
    missing = (set(safety.atomic_props) | set(ldba.atomic_props)) - set(mdp.atomic_props)
    if missing:
        raise AlphabetMismatchError(sorted(missing))
    problems = validate_mdp(mdp)
    if problems:
        raise MdpValidationError(problems)
    problems = safety.validate()
    if problems:
        raise NotSafetyFormulaError("invalid safety automaton: " + "; ".join(problems))
    problems = validate_suitable(ldba)
    if problems:
        raise UnsuitableLdbaError(problems)

    num_actions = mdp.num_actions
    action_names = mdp.action_names + tuple(
        f"{EPSILON_ACTION_PREFIX}{q}" for q in range(ldba.num_states)
    )

    start = (mdp.initial, safety.initial, ldba.initial)
    states: list[ProductState] = [start]
    index: dict[ProductState, int] = {start: 0}
    actions: list[tuple[int, ...]] = []
    rows: list[list[tuple[int, float]]] = []
    pair_state: list[int] = []
    pair_action: list[int] = []

    def intern(triple: ProductState) -> int:
        if triple not in index:
            index[triple] = len(states)
            states.append(triple)
        return index[triple]

    frontier = 0
    while frontier < len(states):
        s, q_psi, q_phi = states[frontier]
        label = mdp.labels[s]
        next_psi = safety.step(q_psi, label)
        next_phi = ldba.successor(q_phi, label)
        allowed = list(mdp.actions[s])
        allowed += [num_actions + q for q in sorted(ldba.epsilon_targets(q_phi))]
        for action in allowed:
            if action < num_actions:
                row = [(intern((t, next_psi, next_phi)), p) for t, p in mdp.transitions[(s, action)] if p > 0]
            else:
                row = [(intern((s, q_psi, action - num_actions)), 1.0)]
            rows.append(row)
            pair_state.append(frontier)
            pair_action.append(action)
        actions.append(tuple(allowed))
        frontier += 1

    n = len(states)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in actions])
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.array([t for r in rows for t, _ in r], dtype=np.int64)
    data = np.array([p for r in rows for _, p in r], dtype=float)
    transition = sparse.csr_matrix((data, indices, indptr), shape=(len(rows), n))
    cumulative = np.concatenate([np.cumsum([p for _, p in r]) for r in rows]) if rows else np.zeros(0)

    product = ProductMdp(
        mdp=mdp,
        safety=safety,
        ldba=ldba,
        states=tuple(states),
        index=index,
        action_names=action_names,
        actions=tuple(actions),
        offsets=offsets,
        pair_state=np.array(pair_state, dtype=np.int64),
        pair_action=np.array(pair_action, dtype=np.int64),
        transition=transition,
        cumulative=cumulative,
        rewards=np.array([mdp.rewards[s] for s, _, _ in states], dtype=float),
        safe=np.array([q in safety.accepting for _, q, _ in states], dtype=bool),
        accepting=np.array([q in ldba.accepting for _, _, q in states], dtype=bool),
    )
    logger.info(
        "Product built: %d reachable states of %d, %d state-action pairs",
        product.num_states, product.full_size, product.num_pairs,
    )
    return product


def step_product(
    product: ProductMdp,
    state: int,
    action: int,
    rng: np.random.Generator,
) -> tuple[int, float, bool, bool]:
    """Take one product step.

    Returns:
        Tuple of (next state, R(next), next in B_psi, next in B_phi)

    Raises:
        DisallowedActionError: If the action is not allowed in the state
    """
    return sample_pair(product, product.pair(state, action), rng)


def sample_pair(product: ProductMdp, pair: int, rng: np.random.Generator) -> tuple[int, float, bool, bool]:
    start, end = product.transition.indptr[pair], product.transition.indptr[pair + 1]
    if end - start == 1:
        following = int(product.transition.indices[start])
    else:
        pick = int(np.searchsorted(product.cumulative[start:end], rng.random(), side="right"))
        following = int(product.transition.indices[start + min(pick, end - start - 1)])
    return (
        following,
        float(product.rewards[following]),
        bool(product.safe[following]),
        bool(product.accepting[following]),
    )


@dataclass
class ProductPolicy:
    """Memoryless, possibly mixed, product policy; one weight per state-action pair."""
    weights: np.ndarray

    @classmethod
    def uniform(cls, product: ProductMdp, sets: Optional[list[Iterable[int]]] = None) -> "ProductPolicy":
        """Uniform over ``sets[x]`` (all allowed actions when omitted)."""
        weights = np.zeros(product.num_pairs)
        for x in range(product.num_states):
            chosen = product.actions[x] if sets is None else sorted(sets[x])
            for action in chosen:
                weights[product.pair(x, action)] = 1.0 / len(chosen)
        return cls(weights)

    @classmethod
    def deterministic(cls, product: ProductMdp, choice: list[int]) -> "ProductPolicy":
        weights = np.zeros(product.num_pairs)
        for x, action in enumerate(choice):
            weights[product.pair(x, action)] = 1.0
        return cls(weights)

    @classmethod
    def mixing(
        cls,
        product: ProductMdp,
        sets: list[Iterable[int]],
        preferred: list[int],
        upsilon: float,
    ) -> "ProductPolicy":
        """Mass 1 - upsilon on ``preferred[x]``, upsilon spread uniformly over ``sets[x]``."""
        weights = np.zeros(product.num_pairs)
        for x in range(product.num_states):
            chosen = sorted(sets[x])
            for action in chosen:
                weights[product.pair(x, action)] += upsilon / len(chosen)
            weights[product.pair(x, preferred[x])] += 1.0 - upsilon
        return cls(weights)

    def is_pure(self) -> bool:
        return bool(np.all((self.weights == 0.0) | (self.weights == 1.0)))

    def distribution(self, product: ProductMdp, state: int) -> dict[int, float]:
        return {
            product.actions[state][i]: float(w)
            for i, w in enumerate(self.weights[product.offsets[state]:product.offsets[state + 1]])
            if w > 0
        }

    def matrix(self, product: ProductMdp) -> sparse.csr_matrix:
        """(states x pairs) matrix W with W[x, pair] = pi(action | x)."""
        return sparse.csr_matrix(
            (self.weights, (product.pair_state, np.arange(product.num_pairs))),
            shape=(product.num_states, product.num_pairs),
        )

    def validate(self, product: ProductMdp) -> list[str]:
        problems = []
        if len(self.weights) != product.num_pairs:
            return [f"{len(self.weights)} weights for {product.num_pairs} state-action pairs"]
        if np.any(self.weights < 0):
            problems.append("negative action probabilities")
        sums = np.add.reduceat(self.weights, product.offsets[:-1])
        for x in np.flatnonzero(np.abs(sums - 1.0) > PROBABILITY_SUM_TOLERANCE):
            problems.append(f"state {product.state_name(int(x))}: probabilities sum to {sums[x]:.12g}")
        return problems

    def sample(self, product: ProductMdp, state: int, rng: np.random.Generator) -> int:
        start, end = int(product.offsets[state]), int(product.offsets[state + 1])
        weights = self.weights[start:end]
        if end - start == 1:
            return product.actions[state][0]
        cumulative = np.cumsum(weights)
        pick = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return product.actions[state][min(pick, end - start - 1)]

    def to_dict(self, product: ProductMdp) -> dict:
        """Per product state: components, names and the action distribution by name."""
        states = []
        for x, (s, q_psi, q_phi) in enumerate(product.states):
            states.append({
                "state": x,
                "env_state": product.mdp.state_names[s],
                "q_safety": q_psi,
                "q_ltl": q_phi,
                "actions": {
                    product.action_names[a]: w
                    for a, w in sorted(self.distribution(product, x).items())
                },
            })
        return {"action_names": list(product.action_names), "states": states}

    @classmethod
    def from_dict(cls, product: ProductMdp, data: dict) -> "ProductPolicy":
        weights = np.zeros(product.num_pairs)
        names = {name: i for i, name in enumerate(product.action_names)}
        for entry in data["states"]:
            for name, w in entry["actions"].items():
                weights[product.pair(int(entry["state"]), names[name])] = float(w)
        return cls(weights)


@dataclass
class FiniteMemoryPolicy:
    """Finite-memory policy for the bare MDP induced by a product policy.

    Modes are automaton-state pairs (q_psi, q_phi). In mode m and environment state
    s the policy draws from ``decisions[(m, s)]``: an MDP action moves the
    environment and then the mode follows both automata on L(s); an ε-action only
    switches the mode, and counts as one time step like in the product.
    """
    modes: tuple[tuple[int, int], ...]
    initial_mode: int
    action_names: tuple[str, ...]
    num_env_actions: int
    decisions: dict[tuple[int, int], tuple[tuple[int, float], ...]]
    mode_update: dict[tuple[int, int], int]          # (mode, s) -> mode after an MDP action
    switches: dict[tuple[int, int], int]             # (mode, eps action) -> mode
    safe_modes: frozenset[int]
    accepting_modes: frozenset[int]

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def is_memoryless(self) -> bool:
        return self.num_modes == 1

    def choose(self, mode: int, env_state: int, rng: np.random.Generator) -> int:
        options = self.decisions[(mode, env_state)]
        if len(options) == 1:
            return options[0][0]
        cumulative = np.cumsum([p for _, p in options])
        pick = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return options[min(pick, len(options) - 1)][0]

    def next_mode(self, mode: int, env_state: int, action: int) -> int:
        if action >= self.num_env_actions:
            return self.switches[(mode, action)]
        return self.mode_update[(mode, env_state)]

    def to_dict(self, mdp: LabeledMdp) -> dict:
        return {
            "modes": [list(m) for m in self.modes],
            "initial_mode": self.initial_mode,
            "decisions": [
                {
                    "mode": m,
                    "env_state": mdp.state_names[s],
                    "actions": {self.action_names[a]: p for a, p in options},
                    "next_mode": self.mode_update[(m, s)],
                }
                for (m, s), options in sorted(self.decisions.items())
            ],
            "switches": [
                {"mode": m, "action": self.action_names[a], "next_mode": following}
                for (m, a), following in sorted(self.switches.items())
            ],
        }


def induce_policy(product: ProductMdp, policy: ProductPolicy) -> FiniteMemoryPolicy:
    """Finite-memory MDP policy whose memory is the pair of automaton states."""
    modes: dict[tuple[int, int], int] = {}
    for _, q_psi, q_phi in product.states:
        modes.setdefault((q_psi, q_phi), len(modes))

    mdp, safety, ldba = product.mdp, product.safety, product.ldba
    decisions, mode_update, switches = {}, {}, {}
    for x, (s, q_psi, q_phi) in enumerate(product.states):
        mode = modes[(q_psi, q_phi)]
        decisions[(mode, s)] = tuple(sorted(policy.distribution(product, x).items()))
        label = mdp.labels[s]
        following = (safety.step(q_psi, label), ldba.successor(q_phi, label))
        mode_update[(mode, s)] = modes.setdefault(following, len(modes))
        for q in ldba.epsilon_targets(q_phi):
            switches[(mode, product.epsilon_action(q))] = modes.setdefault((q_psi, q), len(modes))

    ordered = tuple(sorted(modes, key=modes.get))
    start = product.states[product.initial]
    return FiniteMemoryPolicy(
        modes=ordered,
        initial_mode=modes[(start[1], start[2])],
        action_names=product.action_names,
        num_env_actions=mdp.num_actions,
        decisions=decisions,
        mode_update=mode_update,
        switches=switches,
        safe_modes=frozenset(i for i, (q, _) in enumerate(ordered) if q in safety.accepting),
        accepting_modes=frozenset(i for i, (_, q) in enumerate(ordered) if q in ldba.accepting),
    )


def evaluate_induced(
    mdp: LabeledMdp,
    policy: FiniteMemoryPolicy,
    episodes: int,
    horizon: int,
    rng: np.random.Generator,
) -> EvaluationStats:
    """Monte-Carlo statistics of a finite-memory policy simulated on the bare MDP."""
    returns = np.zeros(episodes)
    safe_runs = buchi_runs = 0
    tail = horizon // 2
    for episode in range(episodes):
        s, mode = mdp.initial, policy.initial_mode
        total, discount = 0.0, 1.0
        safe, buchi = True, False
        for t in range(horizon):
            total += discount * mdp.rewards[s]
            discount *= mdp.gamma
            safe = safe and mode in policy.safe_modes
            buchi = buchi or (t >= tail and mode in policy.accepting_modes)
            action = policy.choose(mode, s, rng)
            following = s if action >= policy.num_env_actions else sample_transition(mdp, s, action, rng)
            mode = policy.next_mode(mode, s, action)
            s = following
        returns[episode] = total
        safe_runs += safe
        buchi_runs += buchi
    return EvaluationStats.from_runs(returns, safe_runs, buchi_runs, horizon)


def dump_product(product: ProductMdp) -> dict:
    """JSON-ready description with deterministic state and action order."""
    transitions = []
    for pair in range(product.num_pairs):
        x, action = int(product.pair_state[pair]), int(product.pair_action[pair])
        for target, prob in product.successors(pair):
            transitions.append([x, product.action_names[action], target, prob])
    return {
        "initial": product.initial,
        "full_size": product.full_size,
        "action_names": list(product.action_names),
        "states": [
            {
                "id": x,
                "name": product.state_name(x),
                "env_state": product.mdp.state_names[s],
                "q_safety": q_psi,
                "q_ltl": q_phi,
                "reward": float(product.rewards[x]),
                "safe": bool(product.safe[x]),
                "accepting": bool(product.accepting[x]),
                "actions": [product.action_names[a] for a in product.actions[x]],
            }
            for x, (s, q_psi, q_phi) in enumerate(product.states)
        ],
        "transitions": transitions,
    }


def write_product_dump(product: ProductMdp, path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(dump_product(product), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target
