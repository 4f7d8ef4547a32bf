"""Model-free lexicographic learner over a product MDP.

Three tables are learned side by side, one value per state-action pair:

* ``safety`` - crafted reward r_psi on entering B_psi, discount 1 - r_psi there and 0
  elsewhere; its maximum approaches the best probability of staying safe.
* ``ltl`` - crafted reward r_phi on entering B_phi with discount 1 - r_phi, and
  discount 1 - r_phi^2 elsewhere, bootstrapping only from near-safe actions;
  approaches the best Büchi probability among safety-optimal policies.
* ``qoc`` - SARSA estimate of the discounted quality-of-control return.

Actions are chosen lexicographically: keep actions whose safety value is within
tau_safety of the best, among those keep actions within tau_ltl of the best LTL
value, then play the return-greedy one (mixed with a uniform choice w.p. upsilon).
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .config import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, STATS_EVERY
from .errors import CheckpointError, DimensionMismatchError
from .models import EvaluationStats, Hyper, Transition
from .product import ProductMdp, ProductPolicy, sample_pair

logger = logging.getLogger(__name__)

TABLES = ("safety", "ltl", "qoc")


@dataclass
class QTriple:
    """Q_psi, Q_psi_phi and Q^R as flat per-pair arrays, plus pair visit counts."""
    product: ProductMdp
    safety: np.ndarray
    ltl: np.ndarray
    qoc: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, product: ProductMdp) -> "QTriple":
        n = product.num_pairs
        return cls(product, np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n, dtype=np.int64))

    def copy(self) -> "QTriple":
        return QTriple(self.product, self.safety.copy(), self.ltl.copy(), self.qoc.copy(), self.visits.copy())

    def state_visits(self) -> np.ndarray:
        return np.add.reduceat(self.visits, self.product.offsets[:-1])

    def values(self, table: str, state: int) -> np.ndarray:
        start, end = self.product.offsets[state], self.product.offsets[state + 1]
        return getattr(self, table)[start:end]

    def equals(self, other: "QTriple") -> bool:
        return all(np.array_equal(getattr(self, name), getattr(other, name)) for name in TABLES + ("visits",))


def _near_best(values: np.ndarray, tau: float) -> np.ndarray:
    return values.max() - values <= tau


def update_qs(q: QTriple, t: Transition, h: Hyper) -> QTriple:
    """Apply the three table updates for one experienced transition, in place.

    ``t.reward`` is R of the state being left. The safety target has no bootstrap
    term outside B_psi. The LTL target bootstraps from the maximum over the
    estimated safe set Â_psi of the next state, read from Q_psi before this update.
    """
    product = q.product
    i = product.pair(t.state, t.action)
    following = slice(product.offsets[t.next_state], product.offsets[t.next_state + 1])
    alpha = h.alpha
    safe_next = _near_best(q.safety[following], h.tau_safety)
    best_ltl = q.ltl[following][safe_next].max()

    if t.next_safe:
        target = h.r_safety + (1.0 - h.r_safety) * q.safety[following].max()
        q.safety[i] = (1.0 - alpha) * q.safety[i] + alpha * target
    else:
        q.safety[i] = (1.0 - alpha) * q.safety[i]

    if t.next_accepting:
        target = h.r_ltl + (1.0 - h.r_ltl) * best_ltl
    else:
        target = (1.0 - h.r_ltl * h.r_ltl) * best_ltl
    q.ltl[i] = (1.0 - alpha) * q.ltl[i] + alpha * target

    target = t.reward + h.gamma * q.qoc[product.pair(t.next_state, t.next_action)]
    q.qoc[i] = (1.0 - alpha) * q.qoc[i] + alpha * target
    q.visits[i] += 1
    return q


def near_optimal_sets(q: QTriple, state: int, h: Hyper) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Estimated lexicographic action sets (Â_psi, Â_psi_phi) of a product state."""
    actions = q.product.actions[state]
    safe = np.flatnonzero(_near_best(q.values("safety", state), h.tau_safety)).tolist()
    ltl = q.values("ltl", state)
    best = max(ltl[k] for k in safe)
    chosen = [k for k in safe if best - ltl[k] <= h.tau_ltl]
    return tuple(actions[k] for k in safe), tuple(actions[k] for k in chosen)


def _return_greedy(q: QTriple, state: int, candidates: tuple[int, ...]) -> int:
    product = q.product
    values = [q.qoc[product.pair(state, a)] for a in candidates]
    return candidates[int(np.argmax(values))]


def choose_action(q: QTriple, state: int, h: Hyper, rng: np.random.Generator) -> int:
    """Pick an action: explore w.p. epsilon, mix w.p. upsilon, otherwise lexicographic greedy.

    One uniform draw u decides: u < epsilon explores over all allowed actions,
    u < epsilon + upsilon picks uniformly from Â_psi_phi.
    """
    actions = q.product.actions[state]
    u = rng.random()
    if u < h.epsilon:
        return actions[int(rng.integers(len(actions)))]
    _, candidates = near_optimal_sets(q, state, h)
    if u < h.epsilon + h.upsilon:
        return candidates[int(rng.integers(len(candidates)))]
    return _return_greedy(q, state, candidates)


def greedy_policy(q: QTriple, h: Hyper) -> ProductPolicy:
    """Evaluation policy: return-greedy within Â_psi_phi w.p. 1 - upsilon, uniform over it otherwise."""
    product = q.product
    sets, preferred = [], []
    for x in range(product.num_states):
        _, candidates = near_optimal_sets(q, x, h)
        sets.append(candidates)
        preferred.append(_return_greedy(q, x, candidates))
    return ProductPolicy.mixing(product, sets, preferred, h.upsilon)


# Statistics and checkpoints

@dataclass
class StatsRecorder:
    """Collects training statistics rows and, optionally, writes periodic checkpoints."""
    every: int = STATS_EVERY
    checkpoint_path: Optional[Path] = None
    rows: list[dict] = field(default_factory=list)

    def record(self, row: dict) -> None:
        self.rows.append(row)

    def checkpoint(self, q: QTriple, hyper: Hyper, episode: int, rng: np.random.Generator) -> None:
        if self.checkpoint_path is not None:
            save_checkpoint(self.checkpoint_path, q, hyper, episode, rng)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def write_csv(self, path) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(target, index=False)
        return target


def _set_sizes(q: QTriple, h: Hyper, visited: np.ndarray) -> tuple[float, float]:
    states = np.flatnonzero(visited)
    if len(states) == 0:
        return 0.0, 0.0
    sizes = [tuple(map(len, near_optimal_sets(q, int(x), h))) for x in states]
    safe, ltl = zip(*sizes)
    return float(np.mean(safe)), float(np.mean(ltl))


def train(
    product: ProductMdp,
    hyper: Hyper,
    episodes: int,
    horizon: int,
    rng: np.random.Generator,
    sink: Optional[StatsRecorder] = None,
    q: Optional[QTriple] = None,
    start_episode: int = 0,
) -> QTriple:
    """Run ``episodes`` training episodes of ``horizon`` steps from the initial product state.

    Each step updates the tables with the transition just experienced, so the last
    transition of an episode is updated too. Schedules advance once per episode
    (indexed from ``start_episode`` when resuming).

    Args:
        product: Product MDP to sample from
        hyper: Hyperparameters with their schedules
        episodes: Number of episodes to run
        horizon: Steps per episode (at least 2)
        rng: Random source; identical seeds give identical tables
        sink: Optional stats/checkpoint consumer
        q: Tables to continue from (fresh zeros when omitted)
        start_episode: Schedule position of the first episode

    Returns:
        The trained tables
    """
    if horizon < 2:
        raise ValueError(f"horizon must be at least 2, got {horizon}")
    q = QTriple.zeros(product) if q is None else q
    every = sink.every if sink is not None else STATS_EVERY
    tail = horizon // 2

    window_returns: list[float] = []
    window_safe = window_buchi = 0
    for episode in range(start_episode, start_episode + episodes):
        h = hyper.at(episode)
        x = product.initial
        reward = float(product.rewards[x])
        safe, buchi = bool(product.safe[x]), False
        total, discount = 0.0, 1.0
        action = choose_action(q, x, h, rng)
        for t in range(horizon):
            total += discount * reward
            discount *= h.gamma
            following, next_reward, next_safe, next_accepting = sample_pair(product, product.pair(x, action), rng)
            next_action = choose_action(q, following, h, rng)
            update_qs(q, Transition(x, action, reward, following, next_action, next_safe, next_accepting), h)
            if t + 1 < horizon:
                safe = safe and next_safe
                buchi = buchi or (t + 1 >= tail and next_accepting)
            x, action, reward = following, next_action, next_reward

        window_returns.append(total)
        window_safe += safe
        window_buchi += buchi
        done = episode + 1 - start_episode
        if done % every == 0 or done == episodes:
            mean_safe, mean_ltl = _set_sizes(q, h, q.state_visits() > 0)
            row = {
                "episode": episode + 1,
                "mean_return": float(np.mean(window_returns)),
                "safety_frequency": window_safe / len(window_returns),
                "buchi_frequency": window_buchi / len(window_returns),
                **h.values(),
                "visited_states": int(np.count_nonzero(q.state_visits())),
                "mean_safe_set": mean_safe,
                "mean_ltl_set": mean_ltl,
            }
            logger.info(
                "Episode %d: mean return %.3f, safe %.3f, buchi %.3f",
                row["episode"], row["mean_return"], row["safety_frequency"], row["buchi_frequency"],
            )
            logger.debug("Schedule values at episode %d: %s", episode + 1, h.values())
            if sink is not None:
                sink.record(row)
                sink.checkpoint(q, hyper, episode + 1, rng)
            window_returns, window_safe, window_buchi = [], 0, 0
    return q


def evaluate(
    product: ProductMdp,
    policy: ProductPolicy,
    episodes: int,
    horizon: int,
    rng: np.random.Generator,
) -> EvaluationStats:
    """Monte-Carlo evaluation of a product policy.

    The return sums gamma^t R(x_t) for t < horizon. An episode counts as safe when
    every visited state is in B_psi, and as Büchi-satisfying when it visits B_phi
    at some t >= horizon / 2.
    """
    returns = np.zeros(episodes)
    safe_runs = buchi_runs = 0
    tail = horizon // 2
    for episode in range(episodes):
        x = product.initial
        total, discount = 0.0, 1.0
        safe, buchi = True, False
        for t in range(horizon):
            total += discount * product.rewards[x]
            discount *= product.gamma
            safe = safe and bool(product.safe[x])
            buchi = buchi or (t >= tail and bool(product.accepting[x]))
            action = policy.sample(product, x, rng)
            x = sample_pair(product, product.pair(x, action), rng)[0]
        returns[episode] = total
        safe_runs += safe
        buchi_runs += buchi
    return EvaluationStats.from_runs(returns, safe_runs, buchi_runs, horizon)


def product_fingerprint(product: ProductMdp) -> dict:
    """Shape and content digest identifying a product for checkpoint compatibility."""
    digest = hashlib.sha256()
    digest.update(repr(product.states).encode())
    digest.update(repr(product.actions).encode())
    digest.update(repr(product.action_names).encode())
    return {
        "states": product.num_states,
        "pairs": product.num_pairs,
        "digest": digest.hexdigest(),
    }


@dataclass
class Checkpoint:
    q: QTriple
    hyper: Hyper
    episode: int
    rng: np.random.Generator


def save_checkpoint(path, q: QTriple, hyper: Hyper, episode: int, rng: np.random.Generator) -> Path:
    """Write a checkpoint atomically (temporary file, then rename)."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "episode": episode,
        "product": product_fingerprint(q.product),
        "hyper": hyper.to_dict(),
        "tables": {name: getattr(q, name).tolist() for name in TABLES},
        "visits": q.visits.tolist(),
        "rng": rng.bit_generator.state,
    }
    temporary = target.with_name(target.name + ".tmp")
    temporary.write_text(json.dumps(data), encoding="utf-8")
    os.replace(temporary, target)
    logger.debug("Checkpoint written to %s at episode %d", target, episode)
    return target


def load_checkpoint(path, product: ProductMdp) -> Checkpoint:
    """Read a checkpoint and check it against ``product``.

    Raises:
        CheckpointError: If the file is unreadable or not a checkpoint of this version
        DimensionMismatchError: If the checkpoint was written for a different product
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data.get('version')!r}")
    expected = product_fingerprint(product)
    if data.get("product") != expected:
        raise DimensionMismatchError(
            f"checkpoint was written for a product with {data['product'].get('states')} states and "
            f"{data['product'].get('pairs')} pairs, not {expected['states']} and {expected['pairs']}"
        )
    try:
        tables = {name: np.array(data["tables"][name], dtype=float) for name in TABLES}
        visits = np.array(data["visits"], dtype=np.int64)
        state = data["rng"]
        rng = np.random.Generator(getattr(np.random, state["bit_generator"])())
        rng.bit_generator.state = state
        hyper = Hyper.from_dict(data["hyper"])
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    q = QTriple(product, tables["safety"], tables["ltl"], tables["qoc"], visits)
    return Checkpoint(q=q, hyper=hyper, episode=int(data["episode"]), rng=rng)


def greedy_values(q: QTriple, h: Hyper) -> np.ndarray:
    """Learned return estimate of the return-greedy action in every product state."""
    product = q.product
    values = np.zeros(product.num_states)
    for x in range(product.num_states):
        _, candidates = near_optimal_sets(q, x, h)
        values[x] = q.qoc[product.pair(x, _return_greedy(q, x, candidates))]
    return values
