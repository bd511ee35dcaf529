"""Command-line interface: artifacts, exit codes, end-to-end subcommands."""

import hashlib
import json
import shutil
import subprocess

import pytest

from relsynth.analytics import AnalyticsSpec
from relsynth.cli import FIT_FILES, main
from relsynth.dataset import load_dataset
from relsynth.llm.mock import MockEndpoint

from conftest import TOKEN_VAR

DETERMINISTIC_FILES = tuple(f for f in FIT_FILES if f != "fit_info.json")


def run_fit(data_dir, out_dir, *extra):
    args = ["fit", "--data", str(data_dir), "--out", str(out_dir),
            "--epsilon", "2.0", "--seed", "3", *extra]
    return main(args)


def endpoint_config(tmp_path, url, **overrides):
    cfg = {"url": url, "model": "mock-model", "auth_env_var": TOKEN_VAR,
           "backoff_base": 0.0}
    cfg.update(overrides)
    path = tmp_path / "endpoint.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def fit_dir(toy_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert run_fit(toy_dir, out) == 0
    return out


class TestFit:
    def test_writes_expected_artifacts(self, fit_dir):
        names = {p.name for p in fit_dir.iterdir()}
        assert names == set(FIT_FILES)

    def test_split_and_summary_contents(self, fit_dir):
        split = json.loads((fit_dir / "split.json").read_text())
        assert split["fraction"] == 0.2
        assert not set(split["train_entities"]) & set(split["holdout_entities"])
        summary = json.loads((fit_dir / "analytics_summary.json").read_text())
        spec = AnalyticsSpec.from_dict(
            json.loads((fit_dir / "discretization.json").read_text())
        )
        assert summary["spec_hash"] == spec.spec_hash
        assert summary["n_rows"] == len(split["train_entities"])

    def test_fit_info_records_settings(self, fit_dir):
        info = json.loads((fit_dir / "fit_info.json").read_text())
        assert info["epsilon"] == 2.0
        assert info["epsilon_spent_exact"] == "2"
        assert info["fit_wall_time_s"] >= 0.0

    def test_artifacts_deterministic(self, toy_dir, fit_dir, tmp_path):
        assert run_fit(toy_dir, tmp_path / "again") == 0
        for name in DETERMINISTIC_FILES:
            first = hashlib.sha256((fit_dir / name).read_bytes()).hexdigest()
            second = hashlib.sha256((tmp_path / "again" / name).read_bytes()).hexdigest()
            assert first == second, name

    def test_missing_data_config_exits_2(self, tmp_path):
        assert run_fit(tmp_path / "nowhere", tmp_path / "out") == 2

    def test_nonpositive_epsilon_exits_2(self, toy_dir, tmp_path):
        args = ["fit", "--data", str(toy_dir), "--out", str(tmp_path / "out"),
                "--epsilon", "0"]
        assert main(args) == 2

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["sample"])  # missing required flags
        assert err.value.code == 2


class TestSample:
    def test_end_to_end_with_mock(self, toy_dir, fit_dir, tmp_path):
        out = tmp_path / "synthetic"
        with MockEndpoint() as ep:
            rc = main([
                "sample", "--fit", str(fit_dir), "--data", str(toy_dir),
                "--endpoint", endpoint_config(tmp_path, ep.url),
                "--out", str(out), "-m", "8", "--seed", "1",
            ])
        assert rc == 0
        synthetic = load_dataset(out / "config.json")
        assert synthetic.entity_count == 8
        log_lines = (out / "synthesis_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 8

    def test_unreachable_endpoint_exits_3(self, toy_dir, fit_dir, tmp_path):
        cfg = endpoint_config(
            tmp_path, "http://127.0.0.1:9/v1/chat/completions", retries=1
        )
        rc = main([
            "sample", "--fit", str(fit_dir), "--data", str(toy_dir),
            "--endpoint", cfg, "--out", str(tmp_path / "out"), "-m", "2",
        ])
        assert rc == 3


class TestEvaluate:
    def test_self_copy_scores_one(self, toy_dir, fit_dir, tmp_path, capsys):
        synthetic = tmp_path / "copy"
        shutil.copytree(toy_dir, synthetic)
        out = tmp_path / "metrics"
        rc = main([
            "evaluate", "--fit", str(fit_dir), "--data", str(toy_dir),
            "--synthetic", str(synthetic), "--out", str(out), "--skip-realism",
        ])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["kl"]["aggregate"] == 1.0
        assert metrics["chi2"]["aggregate"] == 1.0
        assert metrics["realism"] is None
        csv_text = (out / "metrics.csv").read_text()
        assert csv_text.splitlines()[0] == "metric,detail,value"

        capsys.readouterr()
        assert main(["report", "--metrics", str(out)]) == 0
        shown = capsys.readouterr().out
        assert "KL score (aggregate)" in shown
        assert "chi-squared P (aggregate)" in shown

    def test_realism_cap_bounds_judge_calls(self, toy_dir, fit_dir, tmp_path):
        synthetic = tmp_path / "copy"
        shutil.copytree(toy_dir, synthetic)
        out = tmp_path / "metrics"
        with MockEndpoint(scores=(4,)) as ep:
            rc = main([
                "evaluate", "--fit", str(fit_dir), "--data", str(toy_dir),
                "--synthetic", str(synthetic), "--out", str(out),
                "--endpoint", endpoint_config(tmp_path, ep.url),
                "--realism-cap", "3",
            ])
            assert rc == 0
            # at most 3 judged per side: synthetic candidates and holdout baseline
            assert ep.request_count <= 6
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["realism"]["mean"] == 4.0
        assert metrics["baseline_realism"]["mean"] == 4.0

    def test_missing_endpoint_without_skip_exits_2(self, toy_dir, fit_dir, tmp_path):
        synthetic = tmp_path / "copy"
        shutil.copytree(toy_dir, synthetic)
        rc = main([
            "evaluate", "--fit", str(fit_dir), "--data", str(toy_dir),
            "--synthetic", str(synthetic), "--out", str(tmp_path / "m"),
        ])
        assert rc == 2

    def test_dangling_foreign_key_exits_4(self, toy_dir, fit_dir, tmp_path):
        synthetic = tmp_path / "broken"
        shutil.copytree(toy_dir, synthetic)
        admissions = synthetic / "admission.csv"
        lines = admissions.read_text().splitlines()
        bad = lines[1].split(",")
        bad[0] = "zzz-admission"
        bad[1] = "no-such-person"
        admissions.write_text("\n".join(lines + [",".join(bad)]) + "\n")
        rc = main([
            "evaluate", "--fit", str(fit_dir), "--data", str(toy_dir),
            "--synthetic", str(synthetic), "--out", str(tmp_path / "m"),
            "--skip-realism",
        ])
        assert rc == 4


class TestConsoleScript:
    def test_installed_entrypoint(self):
        proc = subprocess.run(
            ["relsynth", "--help"], capture_output=True, text=True, timeout=60
        )
        assert proc.returncode == 0
        for sub in ("fit", "sample", "evaluate", "report"):
            assert sub in proc.stdout
