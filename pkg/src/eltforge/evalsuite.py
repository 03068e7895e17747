"""End-to-end desk-suite harness: extraction/loading and transform success rates.

Each task manifest carries a prompt, the scripted parse payloads the provider
replays, an optional scripted dialogue (answer text plus its parse per
clarifying question), fixtures, and the expected destination state. A task's
extraction/loading succeeds when the materialized destination matches the
expected row count and schema; its transform succeeds when the destination
bytes equal the golden file after canonical CSV normalization.

``no_question`` mode sets the question budget to zero, ablating the
clarification phase: under-specified tasks then land on defaulted
destinations and fail the destination match.
"""

from __future__ import annotations

import json
import shutil
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .compiler import DEFAULT_CREATED_AT
from .engine import Engine, EngineConfig, ExampleStore, Phase
from .executor import Backends, execute, normalize_csv, read_destination
from .providers import ScriptedProvider
from .safety import VerdictStatus
from .tools import Catalog


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class DialogueEntry:
    slot: str
    answer: str
    parse: dict[str, Any]


@dataclass(frozen=True)
class TaskManifest:
    id: str
    prompt: str
    parse: dict[str, Any]
    dialogue: tuple[DialogueEntry, ...]
    fixtures: Path | None
    expected_destination: dict[str, str]
    expected_row_count: int
    expected_schema: dict[str, str]
    transform_golden: Path | None

    @classmethod
    def load(cls, path: Path) -> "TaskManifest":
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ManifestError(f"{path}: manifest must be a mapping")
        for key in ("id", "prompt", "parse", "expected"):
            if key not in doc:
                raise ManifestError(f"{path}: missing required key {key!r}")
        expected = doc["expected"]
        for key in ("destination", "row_count", "schema"):
            if key not in expected:
                raise ManifestError(f"{path}: expected.{key} is required")
        dialogue = tuple(
            DialogueEntry(slot=e["slot"], answer=e["answer"], parse=e["parse"])
            for e in doc.get("dialogue", [])
        )
        fixtures = doc.get("fixtures")
        golden = doc.get("transform_golden")
        return cls(
            id=str(doc["id"]),
            prompt=str(doc["prompt"]),
            parse=dict(doc["parse"]),
            dialogue=dialogue,
            fixtures=(path.parent / fixtures) if fixtures else None,
            expected_destination=dict(expected["destination"]),
            expected_row_count=int(expected["row_count"]),
            expected_schema={str(k): str(v) for k, v in expected["schema"].items()},
            transform_golden=(path.parent / golden) if golden else None,
        )


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    extraction_loading_ok: bool
    transform_ok: bool | None  # None when the task has no golden
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "extraction_loading_ok": self.extraction_loading_ok,
            "transform_ok": self.transform_ok,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class EltReport:
    mode: str
    outcomes: tuple[TaskOutcome, ...]

    @property
    def srdel(self) -> float:
        if not self.outcomes:
            return 0.0
        return 100.0 * sum(1 for o in self.outcomes if o.extraction_loading_ok) / len(self.outcomes)

    @property
    def srdt(self) -> float:
        with_golden = [o for o in self.outcomes if o.transform_ok is not None]
        if not with_golden:
            return 0.0
        return 100.0 * sum(1 for o in with_golden if o.transform_ok) / len(with_golden)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "srdel": self.srdel,
            "srdt": self.srdt,
            "tasks": [o.to_dict() for o in self.outcomes],
        }

    def format_table(self) -> str:
        lines = [
            f"{'Task':<24}{'EL ok':<8}{'T ok':<8}Detail",
            f"{'-' * 22:<24}{'-' * 6:<8}{'-' * 6:<8}{'-' * 24}",
        ]
        for o in self.outcomes:
            t_ok = "-" if o.transform_ok is None else str(o.transform_ok)
            lines.append(f"{o.task_id:<24}{str(o.extraction_loading_ok):<8}{t_ok:<8}{o.detail}")
        lines.append(f"SRDEL={self.srdel:.1f}%  SRDT={self.srdt:.1f}%  (mode={self.mode})")
        return "\n".join(lines)


def _scripted_responses(manifest: TaskManifest, mode: str) -> list[str]:
    """Materialize the provider's response sequence for one session."""
    responses = [json.dumps(manifest.parse)]
    if mode == "full":
        for entry in manifest.dialogue:
            responses.append(json.dumps({"slot": entry.slot, "question": f"Please clarify: {entry.slot}?"}))
            responses.append(json.dumps(entry.parse))
    return responses


def run_task(
    manifest: TaskManifest,
    mode: str,
    workdir: Path,
    catalog: Catalog,
    examples: ExampleStore,
    question_budget: int = 5,
) -> TaskOutcome:
    provider = ScriptedProvider(_scripted_responses(manifest, mode))
    budget = 0 if mode == "no_question" else question_budget
    engine = Engine(catalog, examples, EngineConfig(question_budget=budget))
    state = engine.start(manifest.prompt, provider, session=manifest.id, created_at=DEFAULT_CREATED_AT)
    answers = [e.answer for e in manifest.dialogue] if mode == "full" else []
    answer_index = 0
    while not state.terminal:
        state = engine.run_until_blocked(state, provider)
        if state.phase is not Phase.QUESTION:
            continue
        if answer_index >= len(answers):
            return TaskOutcome(manifest.id, False, _golden_fail(manifest), "dialogue exhausted before the loop finished")
        state = engine.step(state, provider, user_input=answers[answer_index])
        answer_index += 1

    if state.phase is not Phase.DONE or state.pipeline is None or state.verdict is None:
        return TaskOutcome(manifest.id, False, _golden_fail(manifest), f"session failed: {state.failure}")

    task_root = workdir / manifest.id / mode
    if task_root.exists():
        shutil.rmtree(task_root)
    task_root.mkdir(parents=True)
    backends = Backends(data_root=task_root, fixtures_root=manifest.fixtures)
    pipeline = state.pipeline
    if state.verdict.status is VerdictStatus.SANITIZED and state.verdict.sanitized_pipeline:
        pipeline = state.verdict.sanitized_pipeline
    record = execute(pipeline, backends, state.verdict, catalog)
    if not record.succeeded:
        failed = {t: r.reason for t, r in record.tasks.items() if r.status != "succeeded"}
        return TaskOutcome(manifest.id, False, _golden_fail(manifest), f"run failed: {failed}")

    try:
        produced = read_destination(manifest.expected_destination, backends)
    except Exception as exc:
        return TaskOutcome(manifest.id, False, _golden_fail(manifest), f"destination missing: {exc}")
    el_ok = (
        produced.row_count == manifest.expected_row_count
        and produced.schema == manifest.expected_schema
    )
    detail = ""
    if not el_ok:
        detail = (
            f"destination mismatch: rows {produced.row_count} vs {manifest.expected_row_count}, "
            f"schema {produced.schema}"
        )

    transform_ok: bool | None = None
    if manifest.transform_golden is not None:
        from .executor import destination_file

        produced_path = destination_file(manifest.expected_destination, backends)
        if produced_path.is_file():
            produced_text = produced_path.read_text(encoding="utf-8")
            golden_text = manifest.transform_golden.read_text(encoding="utf-8")
            transform_ok = normalize_csv(produced_text) == normalize_csv(golden_text)
            if not transform_ok and not detail:
                detail = "transform output differs from golden"
        else:
            transform_ok = False
            detail = detail or "transform golden has no produced file to compare"
    return TaskOutcome(manifest.id, el_ok, transform_ok, detail)


def _golden_fail(manifest: TaskManifest) -> bool | None:
    return False if manifest.transform_golden is not None else None


def load_suite(suite_dir: Path) -> list[Path]:
    manifests = sorted(suite_dir.glob("*/task.yaml"))
    if not manifests:
        manifests = sorted(suite_dir.glob("*.yaml"))
    return manifests


def run_elt_suite(
    suite_dir: Path,
    mode: str,
    workdir: Path,
    catalog: Catalog,
    examples: ExampleStore,
) -> EltReport:
    """Run every task manifest in a suite; manifest errors fail that task only."""
    if mode not in ("full", "no_question"):
        raise ValueError(f"unknown mode: {mode!r}")
    outcomes = []
    for path in load_suite(Path(suite_dir)):
        try:
            manifest = TaskManifest.load(path)
        except (ManifestError, KeyError, TypeError, ValueError) as exc:
            outcomes.append(TaskOutcome(path.parent.name or path.stem, False, None, f"manifest error: {exc}"))
            continue
        outcomes.append(run_task(manifest, mode, workdir, catalog, examples))
    return EltReport(mode=mode, outcomes=tuple(outcomes))
