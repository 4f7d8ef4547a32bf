"""Tests for experiment orchestration and the command line."""

import json
from dataclasses import replace

import pytest

from cli import main
from core.config import FULL_SCALE_EPISODES, FULL_SCALE_HORIZON, MANIFEST_FILE, ORACLE_FILE, VERIFY_FILE
from core.errors import ConfigError, DimensionMismatchError, NotSafetyFormulaError, StageError
from core.experiment import (
    config_hash,
    find_runs,
    full_scale,
    oracle_only,
    prepare,
    read_run,
    run,
    run_many,
    translate,
    verify,
)
from core.learn import save_checkpoint
from core.models import ExperimentConfig
from tests.conftest import CONFIGS, EXACT_HYPER, FIXTURES, oracle_exact_tables

TOY_CONFIG = CONFIGS / "toy_grid.json"
CASE_STUDY_CONFIG = CONFIGS / "case_study.json"


def small_config(output_dir, path=TOY_CONFIG, **overrides):
    """Bundled config cut down to a few short episodes."""
    settings = dict(episodes=8, horizon=20, evaluation_episodes=20, stats_every=4, output_dir=str(output_dir))
    settings.update(overrides)
    return ExperimentConfig.from_file(str(path)).with_overrides(**settings)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    config = small_config(tmp_path_factory.mktemp("runs") / "toy")
    return config, run(config)


class TestPrepare:
    """Tests for the translate and product stages."""

    def test_translate_uses_the_config_discount(self, tmp_path):
        mdp, safety, ldba = translate(small_config(tmp_path))
        assert mdp.gamma == 0.95
        assert safety.num_states == 2
        assert ldba.declared_size == 2

    def test_safety_formula_as_ltl_objective(self, tmp_path):
        config = replace(small_config(tmp_path), ltl_hoa=None, ltl_formula="[]!u")
        assert prepare(config).ldba.num_states == 2

    def test_non_safety_ltl_objective_needs_hoa(self, tmp_path):
        config = replace(small_config(tmp_path), ltl_hoa=None, ltl_formula="[]<>g")
        with pytest.raises(StageError) as info:
            prepare(config)
        assert info.value.stage == "translate"
        assert isinstance(info.value.cause, NotSafetyFormulaError)

    def test_invalid_config(self, tmp_path):
        with pytest.raises(StageError) as info:
            prepare(replace(small_config(tmp_path), horizon=1))
        assert isinstance(info.value.cause, ConfigError)
        assert "horizon" in str(info.value)


@pytest.mark.integration
class TestRun:
    """Tests for a full desk run and reading it back."""

    def test_artifacts(self, toy_run):
        _, artifacts = toy_run
        for path in (artifacts.checkpoint, artifacts.stats, artifacts.policy, artifacts.manifest, *artifacts.renders):
            assert path.is_file()

    def test_manifest(self, toy_run):
        config, artifacts = toy_run
        manifest = json.loads(artifacts.manifest.read_text(encoding="utf-8"))
        assert manifest["config_hash"] == config_hash(config)
        assert manifest["seed"] == config.seed
        assert manifest["evaluation"]["episodes"] == 20
        assert "numpy" in manifest["versions"]
        assert "checkpoint.json" in manifest["artifacts"]
        assert manifest["product"]["states"] > 0

    def test_read_run(self, toy_run):
        config, artifacts = toy_run
        record = read_run(artifacts.output_dir)
        assert record.manifest["name"] == config.name
        assert record.stats["episode"].tolist() == [4, 8]
        assert record.policy["grid"]["rows"] == 3
        assert record.render_text.startswith("mode ")
        assert record.render_svg is not None

    def test_find_runs(self, toy_run):
        _, artifacts = toy_run
        assert find_runs(artifacts.output_dir.parent) == [artifacts.output_dir]

    def test_not_a_run_directory(self, tmp_path):
        with pytest.raises(ConfigError, match=MANIFEST_FILE):
            read_run(tmp_path)
        assert find_runs(tmp_path / "absent") == []

    def test_same_seed_same_checkpoint(self, toy_run, tmp_path):
        config, artifacts = toy_run
        again = run(replace(config, output_dir=str(tmp_path / "again")))
        first = json.loads(artifacts.checkpoint.read_text(encoding="utf-8"))
        second = json.loads(again.checkpoint.read_text(encoding="utf-8"))
        assert first["tables"] == second["tables"]

    def test_single_run_skips_the_pool(self, tmp_path):
        config = small_config(tmp_path / "single", episodes=2)
        assert run_many(config, runs=1) == [tmp_path / "single"]

    def test_config_hash_tracks_changes(self, tmp_path):
        config = small_config(tmp_path)
        assert config_hash(config) == config_hash(small_config(tmp_path))
        assert config_hash(config) != config_hash(config.with_overrides(seed=5))

    def test_full_scale_budget(self, tmp_path):
        scaled = full_scale(ExperimentConfig.from_file(str(CASE_STUDY_CONFIG)))
        assert (scaled.episodes, scaled.horizon) == (FULL_SCALE_EPISODES, FULL_SCALE_HORIZON)
        assert scaled.hyper.schedules["alpha"].horizon == FULL_SCALE_EPISODES


class TestVerify:
    """Tests for checkpoint verification against the oracle."""

    def test_report(self, toy_run):
        config, artifacts = toy_run
        report = verify(config, artifacts.checkpoint)
        assert report["episode"] == 8
        assert report["oracle"]["pr_safety"] == pytest.approx(1.0)
        assert report["oracle"]["pr_buchi_given_safe"] == pytest.approx(1.0)
        assert report["return_gap"] == pytest.approx(report["oracle"]["max_return"] - report["greedy_policy"]["return"])
        assert 0.0 <= report["agreement"]["safe_agreement"] <= 1.0
        written = json.loads((artifacts.output_dir / VERIFY_FILE).read_text(encoding="utf-8"))
        assert written == json.loads(json.dumps(report))

    def test_checkpoint_of_another_product(self, toy_run, tmp_path):
        _, artifacts = toy_run
        with pytest.raises(StageError) as info:
            verify(small_config(tmp_path, CASE_STUDY_CONFIG), artifacts.checkpoint)
        assert info.value.stage == "load"
        assert isinstance(info.value.cause, DimensionMismatchError)

    @pytest.mark.oracle
    def test_oracle_exact_tables_agree_everywhere(self, tmp_path, rng):
        """A checkpoint holding the exact crafted values agrees with the oracle in every state."""
        config = small_config(tmp_path, CASE_STUDY_CONFIG)
        q, _ = oracle_exact_tables(prepare(config))
        path = save_checkpoint(tmp_path / "checkpoint.json", q, EXACT_HYPER, 1, rng)
        report = verify(config, path, min_visits=1)
        agreement = report["agreement"]
        assert agreement["frequent_states"] == q.product.num_states
        assert agreement["safe_agreement_frequent"] == 1.0
        assert agreement["ltl_agreement_frequent"] == 1.0
        assert agreement["disagreements"] == []
        assert report["return_gap"] == pytest.approx(0.0, abs=1e-6)

    def test_oracle_only(self, tmp_path):
        result = oracle_only(small_config(tmp_path))
        assert result.pr_safety[0] == pytest.approx(1.0)
        report = json.loads((tmp_path / ORACLE_FILE).read_text(encoding="utf-8"))
        assert len(report["states"]) == len(result.pr_safety)


@pytest.mark.integration
class TestCli:
    """Tests for cli.main exit codes and output."""

    def test_translate_formula(self, capsys):
        assert main(["-q", "translate", "[]!(d & X d)"]) == 0
        assert capsys.readouterr().out.startswith("HOA: v1")

    def test_translate_non_safety_formula(self, capsys):
        assert main(["-q", "translate", "<>a"]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_translate_hoa_file(self, capsys, tmp_path):
        target = tmp_path / "out.hoa"
        source = FIXTURES / "case_study_ldba.hoa"
        assert main(["-q", "translate", "--hoa", str(source), "--output", str(target)]) == 0
        assert target.read_text(encoding="utf-8") == source.read_text(encoding="utf-8")

    def test_unknown_proposition(self, capsys):
        assert main(["-q", "translate", "a & zed", "--alphabet", "a,b"]) == 1
        assert "zed" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["run"])
        assert info.value.code == 2

    def test_oracle(self, capsys, tmp_path):
        assert main(["-q", "oracle", str(TOY_CONFIG), "--output", str(tmp_path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["pr_safety"] == pytest.approx(1.0)
        assert (tmp_path / ORACLE_FILE).is_file()

    def test_oracle_summary_is_the_initial_state(self, capsys, tmp_path):
        assert main(["-q", "oracle", str(CASE_STUDY_CONFIG), "--output", str(tmp_path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        report = json.loads((tmp_path / ORACLE_FILE).read_text(encoding="utf-8"))
        assert summary["initial_state"] == report["initial"]
        entry = next(e for e in report["states"] if e["state"] == report["initial"])
        for key in ("pr_safety", "pr_buchi_given_safe", "pr_combined", "max_return"):
            assert summary[key] == pytest.approx(entry[key])
        assert summary["pr_buchi_given_safe"] == pytest.approx(0.64)
        assert summary["pr_combined"] == pytest.approx(0.8)

    def test_run_verify_render(self, capsys, tmp_path):
        out = tmp_path / "run"
        common = ["--episodes", "4", "--horizon", "10", "--output", str(out)]
        assert main(["-q", "run", str(TOY_CONFIG), *common]) == 0
        assert capsys.readouterr().out.strip() == str(out)

        checkpoint = out / "checkpoint.json"
        assert main(["-q", "verify", str(TOY_CONFIG), "--checkpoint", str(checkpoint), *common]) == 0
        assert json.loads(capsys.readouterr().out)["episode"] == 4

        renders = tmp_path / "renders"
        assert main(["-q", "render", str(out / "policy.json"), "--output", str(renders)]) == 0
        assert (renders / "policy.txt").is_file()

    def test_missing_checkpoint(self, capsys, tmp_path):
        missing = tmp_path / "absent.json"
        code = main(["-q", "verify", str(TOY_CONFIG), "--checkpoint", str(missing), "--output", str(tmp_path)])
        assert code == 1
        assert "load" in capsys.readouterr().err


@pytest.mark.full_scale
@pytest.mark.slow
class TestFullScale:
    """Full case-study budget; hours of compute, run on demand with -m full_scale."""

    def test_case_study_reproduction(self, tmp_path):
        config = full_scale(small_config(tmp_path, CASE_STUDY_CONFIG, evaluation_episodes=10_000))
        artifacts = run(config)
        evaluation = json.loads(artifacts.manifest.read_text(encoding="utf-8"))["evaluation"]
        assert 80.0 <= evaluation["mean_return"] <= 88.0
        assert evaluation["safety_frequency"] == 1.0
