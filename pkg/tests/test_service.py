from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from eltforge.config import AppConfig
from eltforge.service import ServiceState, create_app

from conftest import DESK_SUITE, parse_payload, scripted


FIG_RESPONSES = scripted(
    parse_payload(
        {"slot": "sources", "value": [{"kind": "local_dir", "locator": "repo-data"}]}
    ),
    {"slot": "destination", "question": "Where should the repository data be stored?"},
    parse_payload({"slot": "destination", "value": {"kind": "object_store_dir", "name": "cve-bench-new"}}),
    {"slot": "transforms", "question": "What transformations should run before loading?"},
    parse_payload(
        {"slot": "transforms", "explicit_none": True},
        {"slot": "destination", "value": {"name": "elt-bench-new"}},
    ),
)


@pytest.fixture()
def app_config(tmp_path) -> AppConfig:
    fixture = tmp_path / "script.json"
    fixture.write_text(json.dumps(FIG_RESPONSES))
    data_root = tmp_path / "data"
    (data_root / "repo-data").mkdir(parents=True)
    (data_root / "repo-data" / "files.csv").write_text("path,size\nREADME.md,120\nsrc/main.py,800\n")
    return AppConfig(
        provider="scripted",
        scripted_fixture=str(fixture),
        data_root=str(data_root),
        artifacts_root=str(tmp_path / "artifacts"),
        fixtures_root=str(tmp_path / "fixtures"),
    )


@pytest.fixture()
def client(app_config) -> TestClient:
    return TestClient(create_app(app_config))


def drive_fig_dialogue(client) -> dict:
    created = client.post("/sessions", json={"prompt": "archive the repo data"}).json()
    sid = created["id"]
    assert created["phase"] == "Question"
    step1 = client.post(f"/sessions/{sid}/messages", json={"text": "s3 name it cve-bench-new"}).json()
    assert step1["phase"] == "Question"
    final = client.post(
        f"/sessions/{sid}/messages",
        json={"text": "None, actually change the name of the s3 to elt-bench-new"},
    ).json()
    return final


class TestSessions:
    def test_first_message_is_a_clarifying_question(self, client):
        out = client.post("/sessions", json={"prompt": "archive the repo data"})
        assert out.status_code == 200
        body = out.json()
        assert body["phase"] == "Question"
        assert "stored" in body["message"]

    def test_full_dialogue_reaches_done_with_renamed_destination(self, client):
        final = drive_fig_dialogue(client)
        assert final["phase"] == "Done"
        assert final["spec"]["destination"]["name"] == "elt-bench-new"
        assert final["pipeline_id"]
        assert final["verdict_status"] == "Pass"

    def test_message_to_done_session_is_409(self, client):
        final = drive_fig_dialogue(client)
        out = client.post(f"/sessions/{final['id']}/messages", json={"text": "more"})
        assert out.status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/messages", json={"text": "x"}).status_code == 404

    def test_get_session_view_matches_state(self, client):
        final = drive_fig_dialogue(client)
        view = client.get(f"/sessions/{final['id']}").json()
        assert view["phase"] == "Done"
        assert view["spec"]["slots"]["transforms"] == "explicit_none"
        assert view["question_count"] == 2

    def test_empty_prompt_is_422(self, client):
        assert client.post("/sessions", json={"prompt": ""}).status_code == 422

    def test_crash_recovery_rebuilds_identical_state(self, app_config, client):
        final = drive_fig_dialogue(client)
        sid = final["id"]
        # a brand-new service over the same artifact tree
        revived = ServiceState(app_config)
        assert sid in revived.sessions
        assert revived.session_view(sid)["spec"] == final["spec"]
        assert revived.session_view(sid)["phase"] == "Done"

    def test_mid_dialogue_session_survives_restart_and_continues(self, app_config, client):
        created = client.post("/sessions", json={"prompt": "archive the repo data"}).json()
        sid = created["id"]
        assert created["phase"] == "Question"
        # restart: a second app over the same artifacts; provider resumes where it left off
        client2 = TestClient(create_app(app_config))
        view = client2.get(f"/sessions/{sid}").json()
        assert view["phase"] == "Question"
        step1 = client2.post(f"/sessions/{sid}/messages", json={"text": "s3 name it cve-bench-new"}).json()
        assert step1["phase"] == "Question"
        final = client2.post(
            f"/sessions/{sid}/messages",
            json={"text": "None, actually change the name of the s3 to elt-bench-new"},
        ).json()
        assert final["phase"] == "Done"
        assert final["spec"]["destination"]["name"] == "elt-bench-new"


class TestPipelines:
    def test_pipeline_yaml_fetch_and_404(self, client):
        final = drive_fig_dialogue(client)
        pid = final["pipeline_id"]
        got = client.get(f"/pipelines/{pid}")
        assert got.status_code == 200
        assert got.text.startswith("ir_version: 1")
        assert client.get("/pipelines/ffffffffffff").status_code == 404

    def test_validate_endpoint_reports_pass(self, client):
        final = drive_fig_dialogue(client)
        out = client.post(f"/pipelines/{final['pipeline_id']}/validate")
        assert out.status_code == 200
        assert out.json()["status"] == "Pass"

    def test_run_endpoint_materializes_destination(self, client, app_config):
        final = drive_fig_dialogue(client)
        out = client.post(f"/pipelines/{final['pipeline_id']}/run")
        assert out.status_code == 200
        record = out.json()
        assert record["succeeded"]
        assert record["audit"]["passed"]
        from pathlib import Path

        assert (Path(app_config.data_root) / "object_store" / "elt-bench-new").is_dir()

    def test_run_on_rejected_pipeline_is_409_with_verdict(self, client, app_config, catalog):
        from pathlib import Path

        from eltforge.compiler import Literal, PipelineSpec, TaskNode, build, pipeline_id, serialize
        from conftest import make_spec

        p = build(make_spec(), list(catalog))
        tasks = dict(p.tasks)
        tasks["load"] = TaskNode(
            component=tasks["load"].component,
            bindings={**tasks["load"].bindings, "pre_sql": Literal("DROP TABLE users")},
        )
        bad = PipelineSpec(p.name, p.parameters, p.components, tasks, p.metadata)
        pid = pipeline_id(bad)
        outdir = Path(app_config.artifacts_root) / "pipelines" / "manual"
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{pid}.yaml").write_text(serialize(bad))

        verdict = client.post(f"/pipelines/{pid}/validate").json()
        assert verdict["status"] == "Rejected"
        out = client.post(f"/pipelines/{pid}/run")
        assert out.status_code == 409
        assert out.json()["detail"]["verdict"]["status"] == "Rejected"

    def test_summary_endpoint_returns_table_and_chart(self, client):
        final = drive_fig_dialogue(client)
        pid = final["pipeline_id"]
        client.post(f"/pipelines/{pid}/run")
        out = client.get(f"/pipelines/{pid}/summary", params={"group_by": "path", "fn": "count"})
        assert out.status_code == 200
        body = out.json()
        assert body["table"].splitlines()[0] == "path,count"
        assert body["chart"]["kind"] == "bar"
        assert len(body["chart"]["data"]) == 2

    def test_summary_before_run_is_409(self, client):
        final = drive_fig_dialogue(client)
        out = client.get(f"/pipelines/{final['pipeline_id']}/summary")
        assert out.status_code == 409


class TestEval:
    def test_variance_endpoint_on_scripted_provider(self, tmp_path):
        fixture = tmp_path / "script.json"
        fixture.write_text(
            json.dumps(
                scripted(
                    parse_payload(
                        {"slot": "sources", "value": [{"kind": "local_dir", "locator": "in"}]},
                        {"slot": "destination", "value": {"kind": "table_store", "locator": "main", "name": "t"}},
                        {"slot": "transforms", "explicit_none": True},
                    )
                )
            )
        )
        cfg = AppConfig(
            provider="scripted",
            scripted_fixture=str(fixture),
            data_root=str(tmp_path / "data"),
            artifacts_root=str(tmp_path / "artifacts"),
            fixtures_root=str(tmp_path / "fx"),
        )
        client = TestClient(create_app(cfg))
        out = client.post("/eval/variance", json={"prompt": "load in to t", "n": 5})
        assert out.status_code == 200
        report = out.json()
        assert report["unique_versions"] == 1
        assert report["avg_sim"] == 1.0
        assert report["variance_col"] == 0.0
        assert report["duplication_gini"] == 0.0

    def test_elt_endpoint_runs_desk_suite(self, client):
        out = client.post("/eval/elt", json={"suite": str(DESK_SUITE), "mode": "no_question"})
        assert out.status_code == 200
        body = out.json()
        assert body["srdel"] == 62.5

    def test_unknown_suite_404(self, client):
        assert client.post("/eval/elt", json={"suite": "/nope", "mode": "full"}).status_code == 404

    def test_bad_mode_422(self, client):
        out = client.post("/eval/elt", json={"suite": str(DESK_SUITE), "mode": "weird"})
        assert out.status_code == 422
