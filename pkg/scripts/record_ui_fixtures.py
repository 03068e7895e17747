#!/usr/bin/env python3
"""Freeze real service responses into frontend test fixtures.

Drives the rename dialogue, a pipeline run, a summary, a variance report, and
a rejected pipeline through the actual HTTP app, then writes every payload
under frontend/tests/fixtures/. The console's tests replay these, so its
expectations always mirror the live API contract.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from eltforge.compiler import Literal, PipelineSpec, TaskNode, build, pipeline_id, serialize
from eltforge.config import AppConfig, default_catalog
from eltforge.intent import DestinationRef, SlotStatus, SourceRef, TaskSpec
from eltforge.service import create_app

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "frontend" / "tests" / "fixtures"

FIG_RESPONSES = [
    json.dumps(
        {"assignments": [{"slot": "sources", "value": [{"kind": "local_dir", "locator": "repo-data"}]}]}
    ),
    json.dumps({"slot": "destination", "question": "Where should the repository data be stored?"}),
    json.dumps(
        {"assignments": [{"slot": "destination", "value": {"kind": "object_store_dir", "name": "cve-bench-new"}}]}
    ),
    json.dumps({"slot": "transforms", "question": "What transformations should run before loading?"}),
    json.dumps(
        {
            "assignments": [
                {"slot": "transforms", "explicit_none": True},
                {"slot": "destination", "value": {"name": "elt-bench-new"}},
            ]
        }
    ),
]


def rejected_pipeline() -> PipelineSpec:
    spec = TaskSpec()
    spec.sources = [SourceRef("local_dir", "repo-data")]
    spec.slot_status["sources"] = SlotStatus.FILLED
    spec.destination = DestinationRef("table_store", "main", "t")
    spec.slot_status["destination"] = SlotStatus.FILLED
    spec.slot_status["transforms"] = SlotStatus.EXPLICIT_NONE
    p = build(spec, list(default_catalog()))
    tasks = dict(p.tasks)
    tasks["load"] = TaskNode(
        component=tasks["load"].component,
        bindings={**tasks["load"].bindings, "pre_sql": Literal("DROP TABLE users")},
    )
    return PipelineSpec(p.name, p.parameters, p.components, tasks, p.metadata)


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix="ui-fixtures-"))
    fixture_file = tmp / "script.json"
    fixture_file.write_text(json.dumps(FIG_RESPONSES))
    (tmp / "data" / "repo-data").mkdir(parents=True)
    (tmp / "data" / "repo-data" / "files.csv").write_text(
        "path,size\nREADME.md,120\nsrc/main.py,800\n"
    )
    cfg = AppConfig(
        provider="scripted",
        scripted_fixture=str(fixture_file),
        data_root=str(tmp / "data"),
        artifacts_root=str(tmp / "artifacts"),
        fixtures_root=str(tmp / "fixtures"),
    )
    client = TestClient(create_app(cfg))

    def save(name: str, payload) -> None:
        path = FIXTURES / name
        if isinstance(payload, str):
            path.write_text(payload, encoding="utf-8")
        else:
            path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        print(f"wrote {path.relative_to(REPO_ROOT)}")

    step0 = client.post("/sessions", json={"prompt": "archive the repo data"}).json()
    sid = step0["id"]
    step1 = client.post(f"/sessions/{sid}/messages", json={"text": "s3 name it cve-bench-new"}).json()
    step2 = client.post(
        f"/sessions/{sid}/messages",
        json={"text": "None, actually change the name of the s3 to elt-bench-new"},
    ).json()
    assert step2["phase"] == "Done", step2
    save("session_step0.json", step0)
    save("session_step1.json", step1)
    save("session_step2.json", step2)

    pid = step2["pipeline_id"]
    save("pipeline.yaml", client.get(f"/pipelines/{pid}").text)
    save("verdict_pass.json", client.post(f"/pipelines/{pid}/validate").json())
    save("run_record.json", client.post(f"/pipelines/{pid}/run", params={"workers": 2}).json())
    save(
        "summary.json",
        client.get(f"/pipelines/{pid}/summary", params={"group_by": "path", "fn": "count"}).json(),
    )

    four_task_spec = TaskSpec()
    four_task_spec.sources = [SourceRef("local_dir", "repo-data")]
    four_task_spec.slot_status["sources"] = SlotStatus.FILLED
    four_task_spec.destination = DestinationRef("table_store", "main", "sizes")
    four_task_spec.slot_status["destination"] = SlotStatus.FILLED
    from eltforge.intent import TransformStep

    four_task_spec.transforms = [
        TransformStep("filter", {"column": "size", "op": ">", "value": 100})
    ]
    four_task_spec.slot_status["transforms"] = SlotStatus.FILLED
    save("pipeline_4task.yaml", serialize(build(four_task_spec, list(default_catalog()))))

    bad = rejected_pipeline()
    bad_pid = pipeline_id(bad)
    outdir = Path(cfg.artifacts_root) / "pipelines" / "manual"
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{bad_pid}.yaml").write_text(serialize(bad))
    save("pipeline_rejected.yaml", serialize(bad))
    save("verdict_rejected.json", client.post(f"/pipelines/{bad_pid}/validate").json())

    double = client.post(f"/sessions/{sid}/messages", json={"text": "one more"})
    save("error_409.json", {"status": double.status_code, "body": double.json()})

    variance_script = [
        json.dumps(
            {
                "assignments": [
                    {"slot": "sources", "value": [{"kind": "local_dir", "locator": "repo-data"}]},
                    {"slot": "destination", "value": {"kind": "table_store", "locator": "main", "name": "files"}},
                    {"slot": "transforms", "explicit_none": True},
                ]
            }
        )
    ]
    fixture_file.write_text(json.dumps(variance_script))
    client2 = TestClient(create_app(cfg))
    save(
        "variance_report.json",
        client2.post("/eval/variance", json={"prompt": "load the files", "n": 5}).json(),
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
