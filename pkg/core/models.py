"""Data models shared across the library."""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional
import json

import numpy as np

from .config import (
    DEFAULT_GAMMA,
    DEFAULT_SLIP,
    DESK_SCALE_EPISODES,
    DESK_SCALE_HORIZON,
    EVALUATION_EPISODES,
    PROBABILITY_SUM_TOLERANCE,
    STATS_EVERY,
    CASE_STUDY_R_SAFETY,
    CASE_STUDY_R_LTL,
    CASE_STUDY_DECAY_START,
    CASE_STUDY_DECAY_END,
    CASE_STUDY_EPSILON_START,
    CASE_STUDY_EPSILON_END,
)
from .errors import ConfigError

Cell = tuple[int, int]

CELL_NORMAL = "normal"
CELL_OBSTACLE = "obstacle"
CELL_ABSORBING = "absorbing"
CELL_KINDS = (CELL_NORMAL, CELL_OBSTACLE, CELL_ABSORBING)


def _cell_key(cell: Cell) -> str:
    return f"{cell[0]},{cell[1]}"


def _parse_cell_key(key: str) -> Cell:
    row, col = key.split(",")
    return int(row), int(col)


@dataclass(frozen=True)
class GridSpec:
    """Grid world description; cells are (row, col) with row 0 at the top."""
    rows: int
    cols: int
    start: Cell = (0, 0)
    kinds: dict[Cell, str] = field(default_factory=dict)              # missing = normal
    labels: dict[Cell, frozenset[str]] = field(default_factory=dict)  # missing = no label
    rewards: dict[Cell, float] = field(default_factory=dict)          # missing = 0
    slip: tuple[float, float, float] = DEFAULT_SLIP  # intended, left-orthogonal, right-orthogonal
    gamma: float = DEFAULT_GAMMA
    atomic_props: tuple[str, ...] = ()                                # empty = labels in use

    @property
    def cells(self) -> list[Cell]:
        """All cells in row-major order."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    @property
    def alphabet(self) -> tuple[str, ...]:
        """Declared propositions, or the sorted set of propositions used by labels."""
        if self.atomic_props:
            return tuple(self.atomic_props)
        used = set()
        for label in self.labels.values():
            used.update(label)
        return tuple(sorted(used))

    def kind(self, cell: Cell) -> str:
        return self.kinds.get(cell, CELL_NORMAL)

    def label(self, cell: Cell) -> frozenset[str]:
        return frozenset(self.labels.get(cell, frozenset()))

    def reward(self, cell: Cell) -> float:
        return float(self.rewards.get(cell, 0.0))

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols

    def validate(self) -> list[str]:
        """Check the spec invariants.

        Returns:
            List of violation messages (empty if valid)
        """
        problems = []
        if self.rows <= 0 or self.cols <= 0:
            problems.append(f"grid dimensions must be positive, got {self.rows}x{self.cols}")
        if len(self.slip) != 3 or any(p < 0 for p in self.slip):
            problems.append(f"slip must be three non-negative probabilities, got {self.slip}")
        elif abs(sum(self.slip) - 1.0) > PROBABILITY_SUM_TOLERANCE:
            problems.append(f"slip probabilities sum to {sum(self.slip)}, not 1")
        if not self.in_bounds(self.start):
            problems.append(f"start cell {self.start} is outside the grid")
        elif self.kind(self.start) == CELL_OBSTACLE:
            problems.append(f"start cell {self.start} is an obstacle")
        for cell, kind in self.kinds.items():
            if kind not in CELL_KINDS:
                problems.append(f"cell {cell} has unknown kind '{kind}'")
            if not self.in_bounds(cell):
                problems.append(f"cell {cell} is outside the grid")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.atomic_props:
            for cell, label in self.labels.items():
                unknown = set(label) - set(self.atomic_props)
                if unknown:
                    problems.append(f"cell {cell} uses undeclared propositions {sorted(unknown)}")
        return problems

    def to_dict(self) -> dict:
        """Convert spec to dictionary for JSON export."""
        return {
            "kind": "grid",
            "rows": self.rows,
            "cols": self.cols,
            "start": list(self.start),
            "slip": list(self.slip),
            "gamma": self.gamma,
            "atomic_props": list(self.alphabet),
            "cells": {
                _cell_key(cell): {
                    "kind": self.kind(cell),
                    "label": sorted(self.label(cell)),
                    "reward": self.reward(cell),
                }
                for cell in self.cells
                if self.kind(cell) != CELL_NORMAL or self.label(cell) or self.reward(cell) != 0.0
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        """Create spec from dictionary (JSON import)."""
        kinds, labels, rewards = {}, {}, {}
        for key, cell_data in data.get("cells", {}).items():
            cell = _parse_cell_key(key)
            if cell_data.get("kind", CELL_NORMAL) != CELL_NORMAL:
                kinds[cell] = cell_data["kind"]
            if cell_data.get("label"):
                labels[cell] = frozenset(cell_data["label"])
            if cell_data.get("reward", 0.0):
                rewards[cell] = float(cell_data["reward"])
        return cls(
            rows=int(data["rows"]),
            cols=int(data["cols"]),
            start=tuple(data.get("start", (0, 0))),
            kinds=kinds,
            labels=labels,
            rewards=rewards,
            slip=tuple(float(p) for p in data.get("slip", DEFAULT_SLIP)),
            gamma=float(data.get("gamma", DEFAULT_GAMMA)),
            atomic_props=tuple(data.get("atomic_props", ())),
        )


SCHEDULE_SHAPES = ("constant", "geometric", "linear", "harmonic")


@dataclass(frozen=True)
class Schedule:
    """Per-episode decay from ``start`` to ``end`` over ``horizon`` episodes, then held."""
    start: float
    end: Optional[float] = None
    horizon: int = 0
    shape: str = "geometric"

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(start=value, end=value, horizon=0, shape="constant")

    @property
    def final(self) -> float:
        return self.start if self.end is None else self.end

    def value(self, episode: int) -> float:
        """Value of the parameter during the given (0-based) episode."""
        end = self.final
        if self.shape == "constant" or self.start == end:
            return self.start
        if self.shape == "harmonic":
            return max(end, self.start / (1.0 + episode))
        if self.horizon <= 0 or episode >= self.horizon:
            return end
        fraction = episode / self.horizon
        if self.shape == "linear":
            return self.start + (end - self.start) * fraction
        if end <= 0.0:
            # Geometric decay cannot reach zero; fall back to a linear ramp.
            return self.start + (end - self.start) * fraction
        return self.start * (end / self.start) ** fraction

    def validate(self, name: str) -> list[str]:
        problems = []
        if self.shape not in SCHEDULE_SHAPES:
            problems.append(f"{name}: unknown schedule shape '{self.shape}'")
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.final <= 1.0):
            problems.append(f"{name}: values must lie in [0, 1]")
        if self.final > self.start:
            problems.append(f"{name}: end {self.final} exceeds start {self.start}")
        return problems

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.final, "horizon": self.horizon, "shape": self.shape}

    @classmethod
    def from_dict(cls, data) -> "Schedule":
        if isinstance(data, (int, float)):
            return cls.constant(float(data))
        return cls(
            start=float(data["start"]),
            end=float(data.get("end", data["start"])),
            horizon=int(data.get("horizon", 0)),
            shape=data.get("shape", "geometric"),
        )


SCHEDULED_PARAMETERS = ("alpha", "epsilon", "upsilon", "tau_safety", "tau_ltl")


@dataclass(frozen=True)
class Hyper:
    """Learner hyperparameters: current values plus their schedules."""
    r_safety: float = CASE_STUDY_R_SAFETY
    r_ltl: float = CASE_STUDY_R_LTL
    gamma: float = DEFAULT_GAMMA
    alpha: float = CASE_STUDY_DECAY_START
    epsilon: float = CASE_STUDY_EPSILON_START
    upsilon: float = CASE_STUDY_DECAY_START
    tau_safety: float = CASE_STUDY_DECAY_START
    tau_ltl: float = CASE_STUDY_DECAY_START
    schedules: dict[str, Schedule] = field(default_factory=dict)

    @classmethod
    def case_study(cls, episodes: int, gamma: float = DEFAULT_GAMMA) -> "Hyper":
        """Case-study setting with the decays spread over ``episodes``."""
        decay = Schedule(CASE_STUDY_DECAY_START, CASE_STUDY_DECAY_END, episodes)
        return cls.from_schedules(
            r_safety=CASE_STUDY_R_SAFETY,
            r_ltl=CASE_STUDY_R_LTL,
            gamma=gamma,
            schedules={
                "alpha": decay,
                "epsilon": Schedule(CASE_STUDY_EPSILON_START, CASE_STUDY_EPSILON_END, episodes),
                "upsilon": decay,
                "tau_safety": decay,
                "tau_ltl": decay,
            },
        )

    @classmethod
    def from_schedules(
        cls,
        r_safety: float,
        r_ltl: float,
        gamma: float,
        schedules: dict[str, Schedule],
    ) -> "Hyper":
        hyper = cls(r_safety=r_safety, r_ltl=r_ltl, gamma=gamma, schedules=dict(schedules))
        return hyper.at(0)

    def at(self, episode: int) -> "Hyper":
        """Copy with every scheduled parameter set to its value for ``episode``."""
        values = {name: schedule.value(episode) for name, schedule in self.schedules.items()}
        return replace(self, **values)

    def spread_over(self, episodes: int) -> "Hyper":
        """Copy whose decaying schedules end after ``episodes`` instead of their own horizon."""
        schedules = {
            name: schedule if schedule.shape == "constant" else replace(schedule, horizon=episodes)
            for name, schedule in self.schedules.items()
        }
        return replace(self, schedules=schedules).at(0)

    def schedule_for(self, name: str) -> Schedule:
        return self.schedules.get(name, Schedule.constant(getattr(self, name)))

    def validate(self) -> list[str]:
        """Check hyperparameter ranges.

        Returns:
            List of violation messages (empty if valid)
        """
        problems = []
        for name in ("r_safety", "r_ltl"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                problems.append(f"{name} must lie in (0, 1), got {value}")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in SCHEDULED_PARAMETERS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                problems.append(f"{name} must lie in [0, 1], got {value}")
        if self.epsilon + self.upsilon > 1.0 + PROBABILITY_SUM_TOLERANCE:
            problems.append("epsilon + upsilon exceeds 1")
        for name, schedule in self.schedules.items():
            if name not in SCHEDULED_PARAMETERS:
                problems.append(f"no schedulable parameter named '{name}'")
            problems.extend(schedule.validate(name))
        return problems

    def values(self) -> dict[str, float]:
        """Current values of the scheduled parameters."""
        return {name: getattr(self, name) for name in SCHEDULED_PARAMETERS}

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON export."""
        return {
            "r_safety": self.r_safety,
            "r_ltl": self.r_ltl,
            "gamma": self.gamma,
            **{name: self.schedule_for(name).to_dict() for name in SCHEDULED_PARAMETERS},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyper":
        """Create hyperparameters from dictionary (JSON import).

        Scheduled parameters may be a bare number (held constant) or a schedule object.
        """
        defaults = cls()
        schedules = {}
        for name in SCHEDULED_PARAMETERS:
            if name in data:
                schedules[name] = Schedule.from_dict(data[name])
            else:
                schedules[name] = Schedule.constant(getattr(defaults, name))
        return cls.from_schedules(
            r_safety=float(data.get("r_safety", defaults.r_safety)),
            r_ltl=float(data.get("r_ltl", defaults.r_ltl)),
            gamma=float(data.get("gamma", defaults.gamma)),
            schedules=schedules,
        )


@dataclass(frozen=True)
class Transition:
    """One experienced step (s, a, r, s', a') with the acceptance flags of s'."""
    state: int
    action: int
    reward: float
    next_state: int
    next_action: int
    next_safe: bool
    next_accepting: bool


@dataclass
class EvaluationStats:
    """Monte-Carlo estimates for one policy."""
    episodes: int
    horizon: int
    mean_return: float
    stderr_return: float
    safety_frequency: float      # episodes whose whole prefix stayed in B_psi
    buchi_frequency: float       # episodes visiting B_phi in the tail half

    @classmethod
    def from_runs(cls, returns: np.ndarray, safe_runs: int, buchi_runs: int, horizon: int) -> "EvaluationStats":
        """Summarize per-episode returns and success counts."""
        episodes = len(returns)
        if episodes == 0:
            return cls(0, horizon, 0.0, 0.0, 1.0, 0.0)
        stderr = float(returns.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
        return cls(
            episodes=episodes,
            horizon=horizon,
            mean_return=float(returns.mean()),
            stderr_return=stderr,
            safety_frequency=safe_runs / episodes,
            buchi_frequency=buchi_runs / episodes,
        )

    @property
    def safety_violations(self) -> int:
        return int(round((1.0 - self.safety_frequency) * self.episodes))

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "horizon": self.horizon,
            "mean_return": self.mean_return,
            "stderr_return": self.stderr_return,
            "safety_frequency": self.safety_frequency,
            "buchi_frequency": self.buchi_frequency,
        }


@dataclass
class OracleResult:
    """Exact probabilities and lexicographic action sets on a product."""
    pr_safety: np.ndarray
    pr_buchi_given_safe: np.ndarray
    safe_sets: list[frozenset[int]]
    ltl_sets: list[frozenset[int]]
    pr_combined: Optional[np.ndarray] = None
    max_return: Optional[np.ndarray] = None
    notes: dict[str, float] = field(default_factory=dict)   # residuals, iteration counts

    def violations(self) -> list[str]:
        """Check set nesting and probability ranges."""
        problems = []
        for state, (safe, ltl) in enumerate(zip(self.safe_sets, self.ltl_sets)):
            if not ltl:
                problems.append(f"state {state}: empty LTL action set")
            if not ltl <= safe:
                problems.append(f"state {state}: LTL set is not inside the safe set")
        for name in ("pr_safety", "pr_buchi_given_safe"):
            values = getattr(self, name)
            if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
                problems.append(f"{name} leaves [0, 1]")
        return problems

    def to_dict(self, state_names: Optional[list[str]] = None, action_names=None) -> dict:
        """Per-state report keyed by state name."""
        names = state_names or [str(i) for i in range(len(self.pr_safety))]
        label = action_names or (lambda a: a)
        states = []
        for i, name in enumerate(names):
            entry = {
                "state": name,
                "pr_safety": float(self.pr_safety[i]),
                "pr_buchi_given_safe": float(self.pr_buchi_given_safe[i]),
                "safe_actions": [label(a) for a in sorted(self.safe_sets[i])],
                "ltl_actions": [label(a) for a in sorted(self.ltl_sets[i])],
            }
            if self.pr_combined is not None:
                entry["pr_combined"] = float(self.pr_combined[i])
            if self.max_return is not None:
                entry["max_return"] = float(self.max_return[i])
            states.append(entry)
        return {"notes": dict(self.notes), "states": states}


@dataclass
class ExperimentConfig:
    """Configuration for one experiment (JSON file + CLI overrides)."""
    environment: object                     # path to an environment file, or an inline dict
    safety_formula: str = "true"
    ltl_formula: Optional[str] = None       # safety-fragment formula used as the LTL objective
    ltl_hoa: Optional[str] = None           # path to a HOA file holding a suitable LDBA
    hyper: Hyper = field(default_factory=Hyper)
    episodes: int = DESK_SCALE_EPISODES
    horizon: int = DESK_SCALE_HORIZON
    seed: int = 0
    output_dir: str = "runs/default"
    evaluation_episodes: int = EVALUATION_EPISODES
    stats_every: int = STATS_EVERY
    name: str = "experiment"
    base_dir: str = "."                     # relative paths resolve against this

    def resolve(self, path: str) -> Path:
        """Resolve a config-relative path."""
        candidate = Path(path)
        if candidate.is_absolute():
            return candidate
        return Path(self.base_dir) / candidate

    def validate(self) -> list[str]:
        """Check config invariants.

        Returns:
            List of violation messages (empty if valid)
        """
        problems = []
        if (self.ltl_formula is None) == (self.ltl_hoa is None):
            problems.append("exactly one of ltl_formula and ltl_hoa must be given")
        if self.ltl_hoa is not None and not self.resolve(self.ltl_hoa).is_file():
            problems.append(f"HOA file not found: {self.ltl_hoa}")
        if isinstance(self.environment, str):
            if not self.resolve(self.environment).is_file():
                problems.append(f"environment file not found: {self.environment}")
        elif not isinstance(self.environment, dict):
            problems.append("environment must be a file path or an inline object")
        if self.episodes < 0:
            problems.append(f"episodes must be non-negative, got {self.episodes}")
        if self.horizon < 2:
            problems.append(f"horizon must be at least 2, got {self.horizon}")
        if self.stats_every <= 0:
            problems.append("stats_every must be positive")
        problems.extend(self.hyper.validate())
        return problems

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with CLI overrides applied; ``None`` values are ignored.

        Hyperparameter names (alpha, epsilon, upsilon, tau_safety, tau_ltl) override the
        whole schedule with a constant; gamma, r_safety and r_ltl override plain values.
        """
        overrides = {k: v for k, v in overrides.items() if v is not None}
        hyper_fields = {}
        schedules = dict(self.hyper.schedules)
        for name in ("gamma", "r_safety", "r_ltl"):
            if name in overrides:
                hyper_fields[name] = float(overrides.pop(name))
        for name in SCHEDULED_PARAMETERS:
            if name in overrides:
                schedules[name] = Schedule.constant(float(overrides.pop(name)))
        hyper = Hyper.from_schedules(
            r_safety=hyper_fields.get("r_safety", self.hyper.r_safety),
            r_ltl=hyper_fields.get("r_ltl", self.hyper.r_ltl),
            gamma=hyper_fields.get("gamma", self.hyper.gamma),
            schedules=schedules,
        )
        unknown = set(overrides) - {f for f in self.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
        return replace(self, hyper=hyper, **overrides)

    def to_dict(self) -> dict:
        """Convert config to dictionary for JSON export."""
        return {
            "name": self.name,
            "environment": self.environment,
            "safety_formula": self.safety_formula,
            "ltl_formula": self.ltl_formula,
            "ltl_hoa": self.ltl_hoa,
            "hyper": self.hyper.to_dict(),
            "episodes": self.episodes,
            "horizon": self.horizon,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "evaluation_episodes": self.evaluation_episodes,
            "stats_every": self.stats_every,
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        """Create config from dictionary (JSON import)."""
        if "environment" not in data:
            raise ConfigError("config needs an 'environment' entry")
        return cls(
            environment=data["environment"],
            safety_formula=data.get("safety_formula", "true"),
            ltl_formula=data.get("ltl_formula"),
            ltl_hoa=data.get("ltl_hoa"),
            hyper=Hyper.from_dict(data.get("hyper", {})),
            episodes=int(data.get("episodes", DESK_SCALE_EPISODES)),
            horizon=int(data.get("horizon", DESK_SCALE_HORIZON)),
            seed=int(data.get("seed", 0)),
            output_dir=data.get("output_dir", "runs/default"),
            evaluation_episodes=int(data.get("evaluation_episodes", EVALUATION_EPISODES)),
            stats_every=int(data.get("stats_every", STATS_EVERY)),
            name=data.get("name", "experiment"),
            base_dir=base_dir,
        )

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """Load a JSON config; relative paths inside resolve against its directory."""
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=str(Path(path).resolve().parent))
