"""Policy export and renders (ASCII, SVG, CSV).

Renders are pure functions of the policy export document written by ``run``, so a
finished run can be re-rendered without the model. Grid environments get one panel
per automaton mode (q_safety, q_ltl); cells show the dominant action as an arrow,
``e<q>`` for the ε-action switching the LDBA to ``q``, and a trailing ``~`` when the
policy randomizes there.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .config import (
    EPSILON_ACTION_PREFIX,
    MOVE_ARROWS,
    RENDER_CSV_FILE,
    RENDER_SVG_FILE,
    RENDER_TEXT_FILE,
    VALUE_SHADE_BUCKETS,
)
from .models import CELL_ABSORBING, CELL_OBSTACLE, GridSpec
from .product import ProductMdp, ProductPolicy

logger = logging.getLogger(__name__)

OBSTACLE_TOKEN = "##"
ABSORBING_TOKEN = "xx"
UNREACHED_TOKEN = ".."


def policy_export(
    product: ProductMdp,
    policy: ProductPolicy,
    values: Optional[np.ndarray] = None,
    visits: Optional[np.ndarray] = None,
) -> dict:
    """Self-contained policy document: distributions, per-state values and the grid if any."""
    document = policy.to_dict(product)
    for entry in document["states"]:
        x = entry["state"]
        entry["env_id"] = product.states[x][0]
        entry["value"] = None if values is None else float(values[x])
        entry["visits"] = None if visits is None else int(visits[x])
    mdp = product.mdp
    document["grid"] = mdp.grid.to_dict() if mdp.grid is not None else None
    document["env_states"] = list(mdp.state_names)
    return document


def write_policy_export(document: dict, path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


def read_policy_export(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _dominant(entry: dict, action_names: list[str]) -> tuple[str, bool]:
    order = {name: i for i, name in enumerate(action_names)}
    ranked = sorted(entry["actions"].items(), key=lambda item: (-item[1], order[item[0]]))
    randomized = sum(1 for _, w in ranked if w > 0) > 1
    return ranked[0][0], randomized


def _token(name: str) -> str:
    if name in MOVE_ARROWS:
        return MOVE_ARROWS[name]
    if name.startswith(EPSILON_ACTION_PREFIX):
        return "e" + name[len(EPSILON_ACTION_PREFIX):]
    return name[:2]


def _modes(document: dict) -> dict[tuple[int, int], dict[int, dict]]:
    """Per (q_safety, q_ltl): env id -> the state entry shown for that cell."""
    panels: dict[tuple[int, int], dict[int, dict]] = {}
    for entry in document["states"]:
        panel = panels.setdefault((entry["q_safety"], entry["q_ltl"]), {})
        panel.setdefault(entry["env_id"], entry)
    return dict(sorted(panels.items()))


def cell_tokens(document: dict) -> dict[tuple[int, int], list[list[str]]]:
    """Token matrix per mode for a grid-backed export."""
    grid = GridSpec.from_dict(document["grid"])
    tokens = {}
    for mode, panel in _modes(document).items():
        rows = []
        for r in range(grid.rows):
            row = []
            for c in range(grid.cols):
                kind = grid.kind((r, c))
                entry = panel.get(r * grid.cols + c)
                if kind == CELL_OBSTACLE:
                    row.append(OBSTACLE_TOKEN)
                elif entry is None:
                    row.append(UNREACHED_TOKEN)
                elif kind == CELL_ABSORBING:
                    row.append(ABSORBING_TOKEN)
                else:
                    name, randomized = _dominant(entry, document["action_names"])
                    row.append(_token(name) + ("~" if randomized else ""))
            rows.append(row)
        tokens[mode] = rows
    return tokens


def render_text(document: dict) -> str:
    """ASCII render, one block per automaton mode."""
    blocks = []
    for (q_safety, q_ltl), rows in cell_tokens(document).items():
        lines = [f"mode q_safety={q_safety} q_ltl={q_ltl}"]
        lines.extend("".join(f"{token:<4}" for token in row).rstrip() for row in rows)
        blocks.append("\n".join(lines))
    legend = (
        f"legend: ^ v > < moves, e<q> switch LDBA to q, ~ randomized, "
        f"{OBSTACLE_TOKEN} obstacle, {ABSORBING_TOKEN} absorbing, {UNREACHED_TOKEN} not reached"
    )
    return "\n\n".join(blocks + [legend]) + "\n"


def policy_table(document: dict) -> pd.DataFrame:
    """One row per (product state, action with positive probability)."""
    cols = document["grid"]["cols"] if document.get("grid") else None
    rows = []
    for entry in document["states"]:
        for action, weight in entry["actions"].items():
            row = {
                "state": entry["state"],
                "env_state": entry["env_state"],
                "q_safety": entry["q_safety"],
                "q_ltl": entry["q_ltl"],
                "action": action,
                "probability": weight,
                "value": entry.get("value"),
                "visits": entry.get("visits"),
            }
            if cols is not None:
                row["row"], row["col"] = divmod(entry["env_id"], cols)
            rows.append(row)
    return pd.DataFrame(rows)


def _shades(values: np.ndarray) -> np.ndarray:
    finite = values[np.isfinite(values)]
    if len(finite) == 0 or finite.max() == finite.min():
        return np.where(np.isfinite(values), 0, np.nan)
    edges = np.linspace(finite.min(), finite.max(), VALUE_SHADE_BUCKETS + 1)[1:-1]
    return np.where(np.isfinite(values), np.digitize(values, edges), np.nan)


def render_svg(document: dict, path) -> Path:
    """Vector render: value buckets as shades of blue with the action tokens on top."""
    grid = GridSpec.from_dict(document["grid"])
    tokens = cell_tokens(document)
    panels = _modes(document)
    fig, axes = plt.subplots(
        1, len(tokens), figsize=(1.0 + 0.6 * grid.cols * len(tokens), 0.6 * grid.rows + 0.8), squeeze=False,
    )
    for ax, (mode, rows) in zip(axes[0], tokens.items()):
        values = np.full((grid.rows, grid.cols), np.nan)
        for env_id, entry in panels[mode].items():
            if entry.get("value") is not None:
                values[divmod(env_id, grid.cols)] = entry["value"]
        ax.imshow(_shades(values), cmap="Blues", vmin=0, vmax=VALUE_SHADE_BUCKETS, alpha=0.8)
        for r, row in enumerate(rows):
            for c, token in enumerate(row):
                if token == OBSTACLE_TOKEN:
                    ax.add_patch(plt.Rectangle((c - 0.5, r - 0.5), 1, 1, color="black"))
                elif token != UNREACHED_TOKEN:
                    ax.text(c, r, token, ha="center", va="center", fontsize=10)
        ax.set_title(f"q_safety={mode[0]} q_ltl={mode[1]}", fontsize=9)
        ax.set_xticks(range(grid.cols))
        ax.set_yticks(range(grid.rows))
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return target


def render_policy(document: dict, output_dir) -> list[Path]:
    """Write the CSV table and, for grid environments, the ASCII and SVG renders."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / RENDER_CSV_FILE]
    policy_table(document).to_csv(written[0], index=False)
    if document.get("grid") is None:
        logger.info("Environment is not a grid; wrote %s only", written[0])
        return written
    text_path = out / RENDER_TEXT_FILE
    text_path.write_text(render_text(document), encoding="utf-8")
    written.append(text_path)
    written.append(render_svg(document, out / RENDER_SVG_FILE))
    logger.info("Policy renders written to %s", out)
    return written
