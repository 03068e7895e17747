from __future__ import annotations

import json

import pytest

from eltforge.cli import EXIT_ERROR, EXIT_OK, EXIT_REJECTED, main
from eltforge.compiler import Literal, PipelineSpec, TaskNode, build, serialize

from conftest import DESK_SUITE, make_spec, write_orders_fixture


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "eltforge.toml"
    path.write_text(
        "\n".join(
            [
                'provider = "scripted"',
                f'scripted_fixture = "{tmp_path / "script.json"}"',
                f'data_root = "{tmp_path / "data"}"',
                f'artifacts_root = "{tmp_path / "artifacts"}"',
                f'fixtures_root = "{tmp_path / "fixtures"}"',
            ]
        )
    )
    (tmp_path / "script.json").write_text(
        json.dumps(
            [
                json.dumps(
                    {
                        "assignments": [
                            {"slot": "sources", "value": [{"kind": "local_dir", "locator": "orders"}]},
                            {"slot": "destination", "value": {"kind": "table_store", "locator": "main", "name": "orders"}},
                            {"slot": "transforms", "explicit_none": True},
                        ]
                    }
                )
            ]
        )
    )
    write_orders_fixture(tmp_path / "data", rows=3)
    return path


def taskspec_file(tmp_path) -> str:
    spec = make_spec()
    path = tmp_path / "taskspec.json"
    path.write_text(json.dumps(spec.to_dict()))
    return str(path)


class TestCompileCommand:
    def test_compile_to_stdout(self, tmp_path, capsys):
        code = main(["compile", taskspec_file(tmp_path)])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert out.startswith("ir_version: 1")

    def test_compile_to_directory(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        code = main(["compile", taskspec_file(tmp_path), "--out", str(outdir)])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["compile"]["pipeline_ok"]
        assert list(outdir.glob("*.yaml"))


class TestValidateCommand:
    def _write(self, tmp_path, pipeline) -> str:
        path = tmp_path / "p.yaml"
        path.write_text(serialize(pipeline))
        return str(path)

    def test_clean_pipeline_exit_zero(self, tmp_path, catalog, capsys):
        path = self._write(tmp_path, build(make_spec(), list(catalog)))
        assert main(["validate", path]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["status"] == "Pass"

    def test_malicious_pipeline_exit_three(self, tmp_path, catalog, capsys):
        p = build(make_spec(), list(catalog))
        tasks = dict(p.tasks)
        tasks["load"] = TaskNode(
            component=tasks["load"].component,
            bindings={**tasks["load"].bindings, "pre_sql": Literal("DROP TABLE users")},
        )
        bad = PipelineSpec(p.name, p.parameters, p.components, tasks, p.metadata)
        path = self._write(tmp_path, bad)
        assert main(["validate", path]) == EXIT_REJECTED
        out = json.loads(capsys.readouterr().out)
        assert out["status"] == "Rejected"
        assert out["findings"]

    def test_verdict_sidecar_written(self, tmp_path, catalog, capsys):
        path = self._write(tmp_path, build(make_spec(), list(catalog)))
        main(["validate", path])
        assert (tmp_path / "p.verdict.json").exists()


class TestRunCommand:
    def test_run_after_validate_pass(self, tmp_path, catalog, config_file, capsys):
        p = build(make_spec(), list(catalog))
        path = tmp_path / "p.yaml"
        path.write_text(serialize(p))
        assert main(["--config", str(config_file), "validate", str(path)]) == EXIT_OK
        capsys.readouterr()
        code = main(["--config", str(config_file), "run", str(path)])
        out = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        assert out["succeeded"]
        assert out["audit"]["passed"]

    def test_run_rejected_exits_three(self, tmp_path, catalog, config_file, capsys):
        p = build(make_spec(), list(catalog))
        tasks = dict(p.tasks)
        tasks["load"] = TaskNode(
            component=tasks["load"].component,
            bindings={**tasks["load"].bindings, "pre_sql": Literal("rm -rf /")},
        )
        bad = PipelineSpec(p.name, p.parameters, p.components, tasks, p.metadata)
        path = tmp_path / "bad.yaml"
        path.write_text(serialize(bad))
        code = main(["--config", str(config_file), "run", str(path)])
        captured = capsys.readouterr()
        assert code == EXIT_REJECTED
        assert json.loads(captured.err)["error"]["type"] == "rejected"


class TestEvalCommands:
    def test_eval_variance_unique_versions_bounded(self, config_file, capsys):
        code = main(["--config", str(config_file), "eval", "variance", "--prompt", "load orders", "--n", "5"])
        out = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        assert out["unique_versions"] <= 5
        assert out["variance_col"] == 1 - out["avg_sim"]

    def test_eval_elt_full(self, config_file, capsys):
        code = main(["--config", str(config_file), "eval", "elt", "--suite", str(DESK_SUITE)])
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "SRDEL=100.0%" in captured

    def test_eval_elt_no_question(self, config_file, capsys):
        code = main(
            ["--config", str(config_file), "eval", "elt", "--suite", str(DESK_SUITE), "--no-question"]
        )
        captured = capsys.readouterr().out
        assert code == EXIT_OK
        assert "SRDEL=62.5%" in captured


class TestErrors:
    def test_errors_are_machine_readable_json_on_stderr(self, capsys):
        code = main(["validate", "/does/not/exist.yaml"])
        captured = capsys.readouterr()
        assert code == EXIT_ERROR
        err = json.loads(captured.err)
        assert "error" in err and err["error"]["message"]

    def test_unknown_config_key_fails_cleanly(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('nonsense_key = 1\n')
        code = main(["--config", str(cfg), "compile", "x.json"])
        captured = capsys.readouterr()
        assert code == EXIT_ERROR
        assert "nonsense_key" in json.loads(captured.err)["error"]["message"]
