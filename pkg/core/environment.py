"""Environment file loading and writing.

Two JSON formats are understood:

* ``{"kind": "grid", ...}`` - a GridSpec (see ``GridSpec.to_dict``), built with
  ``build_gridworld``;
* ``{"kind": "explicit", ...}`` - an arbitrary labeled MDP given by state and action
  names, ``[state, action, successor, probability]`` rows, rewards and labels.

The writer emits sorted keys and canonical state order, so writing a loaded file
reproduces it byte for byte. Like the rest of ``core`` this module is UI-agnostic.
"""

import json
from pathlib import Path
from typing import Union

from .errors import EnvironmentFormatError, GridSpecError, MdpValidationError
from .mdp import LabeledMdp, build_gridworld, make_mdp
from .models import GridSpec

ENVIRONMENT_KINDS = ("grid", "explicit")


def environment_from_dict(data: dict) -> LabeledMdp:
    """Build an MDP from a parsed environment document.

    Raises:
        EnvironmentFormatError: On unknown kinds, missing keys or dangling names
        GridSpecError, MdpValidationError: If the described model is invalid
    """
    if not isinstance(data, dict):
        raise EnvironmentFormatError("environment document must be a JSON object")
    kind = data.get("kind")
    if kind == "grid":
        try:
            spec = GridSpec.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise EnvironmentFormatError(f"malformed grid environment: {exc}") from exc
        return build_gridworld(spec)
    if kind == "explicit":
        return _explicit_from_dict(data)
    raise EnvironmentFormatError(f"unknown environment kind {kind!r}; expected one of {ENVIRONMENT_KINDS}")


def _explicit_from_dict(data: dict) -> LabeledMdp:
    try:
        states = [str(s) for s in data["states"]]
        action_names = [str(a) for a in data["actions"]]
        rows = data["transitions"]
    except KeyError as exc:
        raise EnvironmentFormatError(f"explicit environment is missing {exc}") from exc

    state_index = {name: i for i, name in enumerate(states)}
    action_index = {name: i for i, name in enumerate(action_names)}
    if len(state_index) != len(states) or len(action_index) != len(action_names):
        raise EnvironmentFormatError("state and action names must be unique")

    def lookup(table: dict, name, what: str) -> int:
        try:
            return table[str(name)]
        except KeyError:
            raise EnvironmentFormatError(f"unknown {what} {name!r}") from None

    mass: dict[tuple[int, int], dict[int, float]] = {}
    for row in rows:
        if len(row) != 4:
            raise EnvironmentFormatError(f"transition row {row!r} must be [state, action, successor, probability]")
        s = lookup(state_index, row[0], "state")
        a = lookup(action_index, row[1], "action")
        t = lookup(state_index, row[2], "state")
        bucket = mass.setdefault((s, a), {})
        bucket[t] = bucket.get(t, 0.0) + float(row[3])

    actions = [sorted(a for (s, a) in mass if s == state) for state in range(len(states))]
    rewards = [0.0] * len(states)
    for name, value in data.get("rewards", {}).items():
        rewards[lookup(state_index, name, "state")] = float(value)
    labels = [frozenset()] * len(states)
    for name, props in data.get("labels", {}).items():
        labels[lookup(state_index, name, "state")] = frozenset(props)

    declared = data.get("atomic_props")
    if declared is None:
        declared = sorted(set().union(*labels)) if labels else []
    initial = data.get("initial", states[0] if states else None)

    return make_mdp(
        state_names=tuple(states),
        action_names=tuple(action_names),
        actions=tuple(tuple(a) for a in actions),
        transitions={key: tuple(sorted(bucket.items())) for key, bucket in mass.items()},
        rewards=tuple(rewards),
        labels=tuple(labels),
        atomic_props=tuple(declared),
        gamma=float(data.get("gamma", 0.99)),
        initial=lookup(state_index, initial, "state"),
        r_max=None if data.get("r_max") is None else float(data["r_max"]),
    )


def environment_to_dict(env: Union[LabeledMdp, GridSpec]) -> dict:
    """Canonical document for an MDP or grid spec.

    Grid-backed MDPs are written in the compact grid format.
    """
    if isinstance(env, GridSpec):
        return env.to_dict()
    if env.grid is not None:
        return env.grid.to_dict()
    names = env.state_names
    transitions = []
    for s in range(env.num_states):
        for a in env.actions[s]:
            for t, p in env.transitions[(s, a)]:
                transitions.append([names[s], env.action_names[a], names[t], p])
    return {
        "kind": "explicit",
        "states": list(names),
        "actions": list(env.action_names),
        "initial": names[env.initial],
        "gamma": env.gamma,
        "atomic_props": list(env.atomic_props),
        "r_max": env.r_max,
        "rewards": {names[s]: r for s, r in enumerate(env.rewards) if r != 0.0},
        "labels": {names[s]: sorted(label) for s, label in enumerate(env.labels) if label},
        "transitions": transitions,
    }


def dumps_environment(env: Union[LabeledMdp, GridSpec]) -> str:
    """Byte-stable JSON text for an environment."""
    return json.dumps(environment_to_dict(env), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_environment(source: Union[str, Path, dict]) -> LabeledMdp:
    """Load an environment from a JSON file path or an already parsed document.

    Raises:
        EnvironmentFormatError: If the file cannot be read or parsed
    """
    if isinstance(source, dict):
        return environment_from_dict(source)
    try:
        text = Path(source).read_text(encoding="utf-8")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise EnvironmentFormatError(f"cannot read environment {source}: {exc}") from exc
    return environment_from_dict(data)


def try_load_environment(source: Union[str, Path, dict]) -> tuple[LabeledMdp | None, str | None]:
    """Load an environment without raising.

    Returns:
        Tuple of (mdp, error_message)
        If successful: (mdp, None)
        If not: (None, error_message)
    """
    try:
        return load_environment(source), None
    except (EnvironmentFormatError, GridSpecError, MdpValidationError) as exc:
        return None, str(exc)


def write_environment(env: Union[LabeledMdp, GridSpec], path: Union[str, Path]) -> Path:
    """Write an environment file and return its path."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps_environment(env), encoding="utf-8")
    return target
