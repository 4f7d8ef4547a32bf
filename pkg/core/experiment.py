"""Experiment orchestration: translate, build, train, evaluate, verify.

Every stage failure is re-raised as ``StageError`` naming the stage. A run writes
into its own directory:

    checkpoint.json  stats.csv  policy.json  manifest.json  (+ renders)
"""

import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .automata import Ldba, SafetyAutomaton, safety_to_automaton
from .config import (
    CHECKPOINT_FILE,
    MANIFEST_FILE,
    ORACLE_FILE,
    FULL_SCALE_EPISODES,
    FULL_SCALE_HORIZON,
    POLICY_FILE,
    RENDER_SVG_FILE,
    RENDER_TEXT_FILE,
    STATS_FILE,
    VERIFY_FILE,
)
from .environment import load_environment
from .errors import ConfigError, NotSafetyFormulaError, StageError
from .hoa import read_hoa
from .learn import (
    QTriple,
    StatsRecorder,
    evaluate,
    greedy_policy,
    greedy_values,
    load_checkpoint,
    near_optimal_sets,
    save_checkpoint,
    train,
)
from .ltl import is_syntactic_safety, parse_ltl
from .mdp import LabeledMdp
from .models import ExperimentConfig, Hyper, OracleResult
from .oracle import exact_policy_value, run_oracle, write_oracle_report
from .product import ProductMdp, build_product
from .render import policy_export, render_policy, write_policy_export

logger = logging.getLogger(__name__)

VERIFY_MIN_VISITS = 100
PACKAGES = ("numpy", "scipy", "networkx", "lark", "pandas", "matplotlib")


@contextmanager
def stage(name: str):
    """Run a block as a named stage; failures surface as StageError."""
    logger.info("Stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _check(config: ExperimentConfig) -> None:
    problems = config.validate()
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))


def translate(config: ExperimentConfig) -> tuple[LabeledMdp, SafetyAutomaton, Ldba]:
    """Load the environment and turn both objectives into automata.

    The MDP discount is taken from the config so that learner and oracle agree.
    """
    source = config.environment
    mdp = load_environment(source if isinstance(source, dict) else config.resolve(source))
    mdp = replace(mdp, gamma=config.hyper.gamma)

    formula = parse_ltl(config.safety_formula, mdp.atomic_props)
    if not is_syntactic_safety(formula):
        raise NotSafetyFormulaError(f"safety formula '{config.safety_formula}' is not in the safety fragment")
    safety = safety_to_automaton(formula)

    if config.ltl_hoa is not None:
        ldba = read_hoa(config.resolve(config.ltl_hoa))
    else:
        objective = parse_ltl(config.ltl_formula, mdp.atomic_props)
        if not is_syntactic_safety(objective):
            raise NotSafetyFormulaError(
                f"LTL objective '{config.ltl_formula}' is outside the safety fragment; supply it as a HOA automaton"
            )
        ldba = safety_to_automaton(objective).to_ldba()
    logger.info(
        "Translated: %d environment states, safety automaton %d states, LDBA %d states",
        mdp.num_states, safety.num_states, ldba.declared_size,
    )
    return mdp, safety, ldba


def prepare(config: ExperimentConfig) -> ProductMdp:
    """Translate and build the product, each as its own stage."""
    with stage("translate"):
        _check(config)
        mdp, safety, ldba = translate(config)
    with stage("product"):
        return build_product(mdp, safety, ldba)


def full_scale(config: ExperimentConfig) -> ExperimentConfig:
    """The long case-study budget with decays spread over it."""
    scaled = config.with_overrides(episodes=FULL_SCALE_EPISODES, horizon=FULL_SCALE_HORIZON)
    return replace(scaled, hyper=scaled.hyper.spread_over(FULL_SCALE_EPISODES))


def config_hash(config: ExperimentConfig) -> str:
    text = json.dumps(config.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass
class RunArtifacts:
    output_dir: Path
    checkpoint: Path
    stats: Path
    policy: Path
    manifest: Path
    renders: list[Path]


def run(config: ExperimentConfig) -> RunArtifacts:
    """Translate, build the product, train, evaluate and write all artifacts."""
    product = prepare(config)
    out = Path(config.output_dir)
    hyper = config.hyper
    rng = np.random.default_rng(config.seed)
    recorder = StatsRecorder(every=config.stats_every)

    with stage("train"):
        q = train(product, hyper, config.episodes, config.horizon, rng, sink=recorder)
        final = hyper.at(max(config.episodes - 1, 0))

    with stage("evaluate"):
        policy = greedy_policy(q, final)
        stats = evaluate(product, policy, config.evaluation_episodes, config.horizon,
                         np.random.default_rng(config.seed + 1))
        logger.info(
            "Evaluation: return %.3f +- %.3f, safe %.4f, buchi %.4f",
            stats.mean_return, stats.stderr_return, stats.safety_frequency, stats.buchi_frequency,
        )

    with stage("write"):
        checkpoint = save_checkpoint(out / CHECKPOINT_FILE, q, hyper, config.episodes, rng)
        stats_path = recorder.write_csv(out / STATS_FILE)
        document = policy_export(product, policy, greedy_values(q, final), q.state_visits())
        policy_path = write_policy_export(document, out / POLICY_FILE)
        renders = render_policy(document, out)
        manifest = {
            "name": config.name,
            "seed": config.seed,
            "config": config.to_dict(),
            "config_hash": config_hash(config),
            "versions": package_versions(),
            "product": {
                "states": product.num_states,
                "full_size": product.full_size,
                "pairs": product.num_pairs,
            },
            "evaluation": stats.to_dict(),
            "artifacts": sorted(p.name for p in [checkpoint, stats_path, policy_path, *renders]),
        }
        manifest_path = out / MANIFEST_FILE
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Run written to %s", out)
    return RunArtifacts(out, checkpoint, stats_path, policy_path, manifest_path, renders)


def _run_seed(config: ExperimentConfig, seed: int) -> str:
    seeded = replace(config, seed=seed, output_dir=str(Path(config.output_dir) / f"run-{seed}"))
    return str(run(seeded).output_dir)


def run_many(config: ExperimentConfig, runs: int, workers: Optional[int] = None) -> list[Path]:
    """Independent runs for seeds seed, seed + 1, ... in a process pool."""
    if runs <= 1:
        return [run(config).output_dir]
    seeds = [config.seed + k for k in range(runs)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(_run_seed, [config] * runs, seeds))
    return [Path(d) for d in done]


def compare_sets(
    product: ProductMdp,
    q: QTriple,
    hyper: Hyper,
    oracle: OracleResult,
    min_visits: int = VERIFY_MIN_VISITS,
) -> dict:
    """Agreement of the learned Â sets with the oracle sets, overall and on well-visited states."""
    visits = q.state_visits()
    rows = []
    for x in range(product.num_states):
        safe, ltl = near_optimal_sets(q, x, hyper)
        rows.append({
            "state": product.state_name(x),
            "visits": int(visits[x]),
            "safe_agrees": frozenset(safe) == oracle.safe_sets[x],
            "ltl_agrees": frozenset(ltl) == oracle.ltl_sets[x],
        })

    def share(selected: list[dict], key: str) -> Optional[float]:
        return sum(r[key] for r in selected) / len(selected) if selected else None

    frequent = [r for r in rows if r["visits"] >= min_visits]
    return {
        "min_visits": min_visits,
        "frequent_states": len(frequent),
        "safe_agreement": share(rows, "safe_agrees"),
        "ltl_agreement": share(rows, "ltl_agrees"),
        "safe_agreement_frequent": share(frequent, "safe_agrees"),
        "ltl_agreement_frequent": share(frequent, "ltl_agrees"),
        "disagreements": [r for r in rows if r["visits"] >= min_visits and not (r["safe_agrees"] and r["ltl_agrees"])],
    }


def verify(config: ExperimentConfig, checkpoint_path, min_visits: int = VERIFY_MIN_VISITS) -> dict:
    """Check a checkpoint against the exact oracle and write ``verify.json`` next to the run.

    Raises:
        StageError: wrapping DimensionMismatchError when the checkpoint belongs to another product
    """
    product = prepare(config)
    with stage("load"):
        saved = load_checkpoint(checkpoint_path, product)
        hyper = saved.hyper.at(max(saved.episode - 1, 0))
    with stage("oracle"):
        oracle = run_oracle(product)
    with stage("verify"):
        agreement = compare_sets(product, saved.q, hyper, oracle, min_visits)
        policy = greedy_policy(saved.q, hyper)
        x = product.initial
        value = float(exact_policy_value(product, policy, "qoc_return")[x])
        optimum = float(oracle.max_return[x])
        report = {
            "checkpoint": str(checkpoint_path),
            "episode": saved.episode,
            "initial_state": product.state_name(x),
            "oracle": {
                "pr_safety": float(oracle.pr_safety[x]),
                "pr_buchi_given_safe": float(oracle.pr_buchi_given_safe[x]),
                "pr_combined": float(oracle.pr_combined[x]),
                "max_return": optimum,
            },
            "greedy_policy": {
                "return": value,
                "safety_prob": float(exact_policy_value(product, policy, "safety_prob")[x]),
                "buchi_prob": float(exact_policy_value(product, policy, "buchi_prob")[x]),
            },
            "return_gap": optimum - value,
            "agreement": agreement,
        }
        if agreement["disagreements"]:
            logger.warning(
                "%d frequently visited states disagree with the oracle sets", len(agreement["disagreements"])
            )
    with stage("write"):
        target = Path(config.output_dir) / VERIFY_FILE
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def oracle_only(config: ExperimentConfig, product: Optional[ProductMdp] = None) -> OracleResult:
    """Model-check the configured product (or an already prepared one) and write ``oracle.json``."""
    if product is None:
        product = prepare(config)
    with stage("oracle"):
        result = run_oracle(product)
    with stage("write"):
        write_oracle_report(result, product, Path(config.output_dir) / ORACLE_FILE)
    return result


@dataclass
class RunRecord:
    """A finished run directory read back for viewing."""
    directory: Path
    manifest: dict
    stats: Optional[pd.DataFrame]
    policy: Optional[dict]
    verify: Optional[dict]
    render_text: Optional[str]
    render_svg: Optional[str]


def _read_json(path: Path) -> Optional[dict]:
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def read_run(directory) -> RunRecord:
    """Load the artifacts of a finished run; missing optional artifacts are None.

    Raises:
        ConfigError: If the directory has no readable manifest
    """
    folder = Path(directory)
    manifest = _read_json(folder / MANIFEST_FILE)
    if manifest is None:
        raise ConfigError(f"{folder} is not a run directory (no {MANIFEST_FILE})")
    stats_path = folder / STATS_FILE
    text_path = folder / RENDER_TEXT_FILE
    svg_path = folder / RENDER_SVG_FILE
    return RunRecord(
        directory=folder,
        manifest=manifest,
        stats=pd.read_csv(stats_path) if stats_path.is_file() else None,
        policy=_read_json(folder / POLICY_FILE),
        verify=_read_json(folder / VERIFY_FILE),
        render_text=text_path.read_text(encoding="utf-8") if text_path.is_file() else None,
        render_svg=svg_path.read_text(encoding="utf-8") if svg_path.is_file() else None,
    )


def find_runs(root) -> list[Path]:
    """Run directories (those holding a manifest) below ``root``, sorted."""
    base = Path(root)
    if not base.is_dir():
        return []
    return sorted(path.parent for path in base.rglob(MANIFEST_FILE))
