"""Labeled MDPs, grid-world construction and the bundled fixtures.

A labeled MDP carries, per state, a set of allowed actions, a transition
distribution for each allowed action, a scalar quality-of-control reward and a
set of atomic propositions. Action ids are global (indices into
``action_names``) so that several states can share an action such as ``up``.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import (
    MOVE_NAMES,
    MOVE_DELTAS,
    MOVE_ORTHOGONALS,
    PROBABILITY_SUM_TOLERANCE,
    DEFAULT_GAMMA,
)
from .errors import DisallowedActionError, GridSpecError, MdpValidationError
from .models import (
    Cell,
    GridSpec,
    CELL_ABSORBING,
    CELL_OBSTACLE,
)

Distribution = tuple[tuple[int, float], ...]


@dataclass(frozen=True, eq=False)
class LabeledMdp:
    """Finite labeled MDP with state rewards; immutable after construction."""
    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    actions: tuple[tuple[int, ...], ...]                  # allowed action ids per state
    transitions: dict[tuple[int, int], Distribution]      # (s, a) -> ((s', p), ...)
    rewards: tuple[float, ...]
    labels: tuple[frozenset[str], ...]
    atomic_props: tuple[str, ...]
    gamma: float = DEFAULT_GAMMA
    initial: int = 0
    r_max: Optional[float] = None                          # declared reward bound
    grid: Optional[GridSpec] = None
    cells: tuple[Cell, ...] = ()                           # state -> cell, grid MDPs only

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    @property
    def num_actions(self) -> int:
        return len(self.action_names)

    @property
    def is_grid(self) -> bool:
        return self.grid is not None

    @property
    def reward_bound(self) -> float:
        """Declared R_max, or the largest absolute reward when none is declared."""
        if self.r_max is not None:
            return self.r_max
        return max((abs(r) for r in self.rewards), default=0.0)

    def successors(self, state: int, action: int) -> Distribution:
        if action not in self.actions[state]:
            raise DisallowedActionError(self.state_names[state], self.action_names[action])
        return self.transitions[(state, action)]

    def probability(self, state: int, action: int, target: int) -> float:
        for successor, prob in self.successors(state, action):
            if successor == target:
                return prob
        return 0.0

    def state_of(self, cell: Cell) -> int:
        """State index of a grid cell."""
        if self.grid is None:
            raise GridSpecError("MDP was not built from a grid")
        return cell[0] * self.grid.cols + cell[1]

    def action_id(self, name: str) -> int:
        return self.action_names.index(name)


def validate_mdp(mdp: LabeledMdp) -> list[str]:
    """Check every LabeledMdp invariant.

    Args:
        mdp: The MDP to check

    Returns:
        List of violations, each naming the state/action and the failed rule
    """
    problems = []
    n = mdp.num_states
    for name, seq in (("rewards", mdp.rewards), ("labels", mdp.labels), ("actions", mdp.actions)):
        if len(seq) != n:
            problems.append(f"{name} has {len(seq)} entries for {n} states")
    if problems:
        return problems
    if not 0 <= mdp.initial < n:
        problems.append(f"initial state {mdp.initial} out of range")
    if not 0.0 <= mdp.gamma < 1.0:
        problems.append(f"gamma {mdp.gamma} outside [0, 1)")

    props = set(mdp.atomic_props)
    bound = mdp.r_max
    for s in range(n):
        name = mdp.state_names[s]
        if not mdp.actions[s]:
            problems.append(f"state {name}: no allowed actions")
        extra = set(mdp.labels[s]) - props
        if extra:
            problems.append(f"state {name}: label uses undeclared propositions {sorted(extra)}")
        if bound is not None and abs(mdp.rewards[s]) > bound:
            problems.append(f"state {name}: |reward| {abs(mdp.rewards[s])} exceeds R_max {bound}")
        for a in mdp.actions[s]:
            if not 0 <= a < mdp.num_actions:
                problems.append(f"state {name}: unknown action id {a}")
                continue
            label = f"({name}, {mdp.action_names[a]})"
            dist = mdp.transitions.get((s, a))
            if dist is None:
                problems.append(f"{label}: no transition distribution")
                continue
            total = 0.0
            for successor, prob in dist:
                if not 0 <= successor < n:
                    problems.append(f"{label}: successor {successor} out of range")
                if prob < 0:
                    problems.append(f"{label}: negative probability {prob}")
                total += prob
            if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
                problems.append(f"{label}: probabilities sum to {total:.12g}, not 1")
    for (s, a) in mdp.transitions:
        if 0 <= s < n and a not in mdp.actions[s]:
            problems.append(f"state {mdp.state_names[s]}: distribution for disallowed action {a}")
    return problems


def make_mdp(**fields) -> LabeledMdp:
    """Build a LabeledMdp and raise MdpValidationError if it is invalid."""
    mdp = LabeledMdp(**fields)
    problems = validate_mdp(mdp)
    if problems:
        raise MdpValidationError(problems)
    return mdp


def _move(spec: GridSpec, cell: Cell, direction: str) -> Cell:
    dr, dc = MOVE_DELTAS[direction]
    target = (cell[0] + dr, cell[1] + dc)
    if not spec.in_bounds(target) or spec.kind(target) == CELL_OBSTACLE:
        return cell
    return target


def build_gridworld(spec: GridSpec) -> LabeledMdp:
    """Turn a grid spec into a labeled MDP.

    Every cell becomes a state (row-major order), obstacles included: an obstacle can
    never be entered, so its state is unreachable and simply self-loops. Absorbing
    cells self-loop under every action. Elsewhere each move reaches the intended
    neighbour with ``slip[0]`` and the left/right orthogonal neighbours with
    ``slip[1]``/``slip[2]``; a blocked outcome keeps the agent in place.

    Raises:
        GridSpecError: If the spec violates its invariants
    """
    problems = spec.validate()
    if problems:
        raise GridSpecError("; ".join(problems))

    cells = tuple(spec.cells)
    index = {cell: i for i, cell in enumerate(cells)}
    all_moves = tuple(range(len(MOVE_NAMES)))
    transitions: dict[tuple[int, int], Distribution] = {}

    for s, cell in enumerate(cells):
        kind = spec.kind(cell)
        for a, move in enumerate(MOVE_NAMES):
            if kind in (CELL_ABSORBING, CELL_OBSTACLE):
                transitions[(s, a)] = ((s, 1.0),)
                continue
            left, right = MOVE_ORTHOGONALS[move]
            mass: dict[int, float] = {}
            for direction, prob in zip((move, left, right), spec.slip):
                if prob <= 0.0:
                    continue
                target = index[_move(spec, cell, direction)]
                mass[target] = mass.get(target, 0.0) + prob
            transitions[(s, a)] = tuple(sorted(mass.items()))

    rewards = tuple(spec.reward(cell) for cell in cells)
    return make_mdp(
        state_names=tuple(f"({r},{c})" for r, c in cells),
        action_names=MOVE_NAMES,
        actions=tuple(all_moves for _ in cells),
        transitions=transitions,
        rewards=rewards,
        labels=tuple(spec.label(cell) for cell in cells),
        atomic_props=spec.alphabet,
        gamma=spec.gamma,
        initial=index[spec.start],
        r_max=max((abs(r) for r in rewards), default=0.0),
        grid=spec,
        cells=cells,
    )


def case_study_grid(gamma: float = DEFAULT_GAMMA) -> GridSpec:
    """The 5x6 case-study grid.

    Start (0,0); obstacle (1,3); absorbing cells (2,2), (2,3), (4,2), (4,3) fence the
    lower corridor through (3,2), (3,3); d marks (0,3), the upper corridor; columns 4-5
    are labeled c and (2,5) also b; the only reward is 1 in (0,5).
    """
    labels = {(r, c): frozenset({"c"}) for r in range(5) for c in (4, 5)}
    labels[(2, 5)] = frozenset({"b", "c"})
    labels[(0, 3)] = frozenset({"d"})
    kinds = {(1, 3): CELL_OBSTACLE}
    for cell in ((2, 2), (2, 3), (4, 2), (4, 3)):
        kinds[cell] = CELL_ABSORBING
    return GridSpec(
        rows=5,
        cols=6,
        start=(0, 0),
        kinds=kinds,
        labels=labels,
        rewards={(0, 5): 1.0},
        slip=(0.8, 0.1, 0.1),
        gamma=gamma,
        atomic_props=("b", "c", "d"),
    )


def toy_grid(gamma: float = 0.95) -> GridSpec:
    """Deterministic 3x3 grid: unsafe centre u, goal column g, absorbing trap (2,0)."""
    labels = {(1, 1): frozenset({"u"})}
    for r in range(3):
        labels[(r, 2)] = frozenset({"g"})
    return GridSpec(
        rows=3,
        cols=3,
        start=(0, 0),
        kinds={(2, 0): CELL_ABSORBING},
        labels=labels,
        rewards={(0, 2): 1.0},
        slip=(1.0, 0.0, 0.0),
        gamma=gamma,
        atomic_props=("g", "u"),
    )


def fixture_example1(gamma: float = DEFAULT_GAMMA) -> LabeledMdp:
    """Two-state MDP where return and []<>b pull in different directions.

    s0 (reward 1, no label): ``beta1`` moves to s1, ``beta2`` self-loops.
    s1 (reward 0, label b): ``return`` goes back to s0.
    """
    return make_mdp(
        state_names=("s0", "s1"),
        action_names=("beta1", "beta2", "return"),
        actions=((0, 1), (2,)),
        transitions={
            (0, 0): ((1, 1.0),),
            (0, 1): ((0, 1.0),),
            (1, 2): ((0, 1.0),),
        },
        rewards=(1.0, 0.0),
        labels=(frozenset(), frozenset({"b"})),
        atomic_props=("b",),
        gamma=gamma,
        initial=0,
        r_max=1.0,
    )


def sample_transition(
    mdp: LabeledMdp,
    state: int,
    action: int,
    rng: np.random.Generator,
) -> int:
    """Draw a successor of (state, action); deterministic for a seeded generator.

    Raises:
        DisallowedActionError: If the action is not allowed in the state
    """
    dist = mdp.successors(state, action)
    if len(dist) == 1:
        return dist[0][0]
    cumulative = np.cumsum([p for _, p in dist])
    pick = int(np.searchsorted(cumulative, rng.random(), side="right"))
    return dist[min(pick, len(dist) - 1)][0]


def mdp_return(mdp: LabeledMdp, path: Sequence[int]) -> float:
    """Discounted return sum_t gamma^t R(s_t) of a finite path."""
    total, discount = 0.0, 1.0
    for state in path:
        total += discount * mdp.rewards[state]
        discount *= mdp.gamma
    return total


def is_path(mdp: LabeledMdp, path: Sequence[int]) -> bool:
    """Whether consecutive states are linked by some positive-probability transition."""
    for current, following in zip(path, path[1:]):
        if not any(
            successor == following and prob > 0
            for a in mdp.actions[current]
            for successor, prob in mdp.transitions[(current, a)]
        ):
            return False
    return True
