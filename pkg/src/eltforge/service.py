"""HTTP surface over sessions, pipelines, validation, execution, and eval.

Persistence is file-based and inspectable: every session keeps a JSONL trace
of its loop transitions (the last line is the authoritative state, so a
restart re-materializes sessions exactly), and pipeline artifacts are
content-addressed YAML files with their verdict and run record alongside.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .compiler import parse as parse_pipeline, pipeline_id, serialize, validate_compile
from .config import (
    AppConfig,
    default_catalog,
    default_examples,
    engine_config,
    make_provider,
)
from .engine import Engine, LoopState, Phase
from .evalsuite import run_elt_suite
from .executor import Backends, Dataset, emit_summary, execute, read_destination
from .metrics import UsageError, variance_report
from .safety import SafetyVerdict, VerdictStatus, scan


class PromptBody(BaseModel):
    prompt: str = Field(min_length=1)


class MessageBody(BaseModel):
    text: str = Field(min_length=1)


class VarianceBody(BaseModel):
    prompt: str = Field(min_length=1)
    n: int = Field(default=20, ge=2, le=200)


class EltBody(BaseModel):
    suite: str
    mode: str = "full"


def _sidecar(pipeline_path: Path, kind: str) -> Path:
    return pipeline_path.with_name(f"{pipeline_path.stem}.{kind}.json")


@dataclass
class SessionHandle:
    state: LoopState
    provider: Any
    trace_path: Path
    lock: threading.Lock = field(default_factory=threading.Lock)


class ServiceState:
    """Owns sessions, the pipeline artifact repository, and shared components."""

    def __init__(self, cfg: AppConfig):
        self.cfg = cfg
        self.artifacts_root = Path(cfg.artifacts_root)
        self.sessions_root = self.artifacts_root / "sessions"
        self.pipelines_root = self.artifacts_root / "pipelines"
        self.sessions_root.mkdir(parents=True, exist_ok=True)
        self.pipelines_root.mkdir(parents=True, exist_ok=True)
        self.catalog = default_catalog()
        self.examples = default_examples()
        self.engine_config = engine_config(cfg)
        self.backends = Backends(
            data_root=Path(cfg.data_root), fixtures_root=Path(cfg.fixtures_root)
        )
        self.sessions: dict[str, SessionHandle] = {}
        self._recover_sessions()

    # -- engine wiring ---------------------------------------------------------

    def _engine_for(self, handle: SessionHandle) -> Engine:
        def trace(event: dict[str, Any]) -> None:
            with handle.trace_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

        return Engine(
            self.catalog,
            self.examples,
            self.engine_config,
            trace=trace,
            overlay_path=handle.trace_path.parent / "tools_overlay.yaml",
        )

    def _recover_sessions(self) -> None:
        for trace_path in sorted(self.sessions_root.glob("*/trace.jsonl")):
            sid = trace_path.parent.name
            last_state: dict[str, Any] | None = None
            provider_calls = 0
            with trace_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event.get("event") == "transition":
                        last_state = event.get("state")
                    elif event.get("event") == "provider":
                        provider_calls += 1
            if last_state is None:
                continue
            provider = make_provider(self.cfg, session=sid)
            if hasattr(provider, "advance"):
                provider.advance(provider_calls)
            self.sessions[sid] = SessionHandle(
                state=LoopState.from_dict(last_state), provider=provider, trace_path=trace_path
            )

    # -- pipeline artifacts ------------------------------------------------------

    def persist_pipeline(self, state: LoopState) -> str | None:
        if state.pipeline is None:
            return None
        pid = pipeline_id(state.pipeline)
        directory = self.pipelines_root / state.session
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{pid}.yaml").write_text(serialize(state.pipeline), encoding="utf-8")
        if state.verdict is not None:
            (directory / f"{pid}.verdict.json").write_text(
                json.dumps(state.verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
            )
        return pid

    def find_pipeline(self, pid: str) -> Path | None:
        matches = sorted(self.pipelines_root.glob(f"*/{pid}.yaml"))
        return matches[0] if matches else None

    def load_verdict(self, pipeline_path: Path) -> SafetyVerdict | None:
        verdict_path = _sidecar(pipeline_path, "verdict")
        if not verdict_path.exists():
            return None
        return SafetyVerdict.from_dict(json.loads(verdict_path.read_text(encoding="utf-8")))

    # -- session views -------------------------------------------------------------

    def session_view(self, sid: str) -> dict[str, Any]:
        handle = self.sessions[sid]
        state = handle.state
        return {
            "id": sid,
            "phase": state.phase.value,
            "question_count": state.question_count,
            "spec": state.spec.to_dict(),
            "transcript": state.transcript.to_dict(),
            "defaults_applied": list(state.defaults_applied),
            "failure": state.failure,
            "pipeline_id": pipeline_id(state.pipeline) if state.pipeline else None,
            "verdict_status": state.verdict.status.value if state.verdict else None,
            "message": _next_message(state),
        }


def _next_message(state: LoopState) -> str:
    if state.phase is Phase.QUESTION:
        for turn in reversed(state.transcript.turns):
            if turn.role == "assistant":
                return turn.text
    if state.phase is Phase.DONE:
        return state.last_observation or "pipeline ready"
    if state.phase is Phase.FAILED:
        return f"session failed: {state.failure}"
    return state.last_observation or ""


def create_app(cfg: AppConfig | None = None) -> FastAPI:
    cfg = cfg or AppConfig()
    svc = ServiceState(cfg)
    app = FastAPI(title="eltforge", version="0.1.0")
    app.state.service = svc
    # the browser console is served from its own origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.post("/sessions")
    def create_session(body: PromptBody) -> dict[str, Any]:
        sid = uuid.uuid4().hex[:12]
        trace_path = svc.sessions_root / sid / "trace.jsonl"
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        provider = make_provider(svc.cfg, session=sid)
        handle = SessionHandle(state=LoopState(session=sid), provider=provider, trace_path=trace_path)
        engine = svc._engine_for(handle)
        state = engine.start(body.prompt, provider, session=sid)
        if not state.terminal:
            state = engine.run_until_blocked(state, provider)
        handle.state = state
        svc.sessions[sid] = handle
        svc.persist_pipeline(state)
        return svc.session_view(sid)

    @app.post("/sessions/{sid}/messages")
    def post_message(sid: str, body: MessageBody) -> dict[str, Any]:
        handle = svc.sessions.get(sid)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        if not handle.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a message is already being processed")
        try:
            state = handle.state
            if state.terminal:
                raise HTTPException(
                    status_code=409, detail=f"session is {state.phase.value}; no more messages"
                )
            if state.phase is not Phase.QUESTION:
                raise HTTPException(status_code=409, detail="session is not waiting for input")
            engine = svc._engine_for(handle)
            state = engine.step(state, handle.provider, user_input=body.text)
            state = engine.run_until_blocked(state, handle.provider)
            handle.state = state
            svc.persist_pipeline(state)
            return svc.session_view(sid)
        finally:
            handle.lock.release()

    @app.get("/sessions/{sid}")
    def get_session(sid: str) -> dict[str, Any]:
        if sid not in svc.sessions:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return svc.session_view(sid)

    @app.get("/pipelines/{pid}")
    def get_pipeline(pid: str) -> Response:
        path = svc.find_pipeline(pid)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown pipeline {pid}")
        return Response(content=path.read_text(encoding="utf-8"), media_type="application/yaml")

    @app.post("/pipelines/{pid}/validate")
    def validate_pipeline(pid: str) -> dict[str, Any]:
        path = svc.find_pipeline(pid)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown pipeline {pid}")
        pipeline = parse_pipeline(path.read_text(encoding="utf-8"))
        verdict = scan(pipeline, svc.catalog)
        _sidecar(path, "verdict").write_text(
            json.dumps(verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        return verdict.to_dict()

    @app.post("/pipelines/{pid}/run")
    def run_pipeline(pid: str, workers: int = Query(default=1, ge=1, le=16)) -> dict[str, Any]:
        path = svc.find_pipeline(pid)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown pipeline {pid}")
        pipeline = parse_pipeline(path.read_text(encoding="utf-8"))
        verdict = svc.load_verdict(path)
        if verdict is None:
            verdict = scan(pipeline, svc.catalog)
            _sidecar(path, "verdict").write_text(
                json.dumps(verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
            )
        if verdict.status is VerdictStatus.REJECTED:
            raise HTTPException(
                status_code=409,
                detail={"message": "pipeline is rejected", "verdict": verdict.to_dict()},
            )
        if verdict.status is VerdictStatus.SANITIZED and verdict.sanitized_pipeline:
            pipeline = verdict.sanitized_pipeline
        record = execute(pipeline, svc.backends, verdict, svc.catalog, max_workers=workers)
        _sidecar(path, "run").write_text(
            json.dumps(record.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        return record.to_dict()

    @app.get("/pipelines/{pid}/summary")
    def pipeline_summary(
        pid: str,
        group_by: str = Query(default=""),
        fn: str = Query(default="count"),
        col: str = Query(default=""),
        kind: str = Query(default="bar"),
    ) -> dict[str, Any]:
        path = svc.find_pipeline(pid)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown pipeline {pid}")
        pipeline = parse_pipeline(path.read_text(encoding="utf-8"))
        dest = _load_destination(pipeline)
        if dest is None:
            raise HTTPException(status_code=422, detail="pipeline has no load destination")
        try:
            dataset = read_destination(dest, svc.backends)
        except Exception:
            raise HTTPException(
                status_code=409, detail="destination not materialized; run the pipeline first"
            ) from None
        measure: dict[str, Any] = {"fn": fn}
        if col:
            measure["col"] = col
        spec: dict[str, Any] = {
            "group_by": [g for g in group_by.split(",") if g],
            "measures": [measure],
            "kind": kind,
        }
        try:
            summary = emit_summary(dataset, spec)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return summary

    @app.post("/eval/variance")
    def eval_variance(body: VarianceBody) -> dict[str, Any]:
        texts = []
        for _ in range(body.n):
            provider = make_provider(svc.cfg, session="variance")
            engine = Engine(svc.catalog, svc.examples, svc.engine_config)
            state = engine.start(body.prompt, provider, session="variance")
            if not state.terminal:
                state = engine.run_until_blocked(state, provider)
            if state.phase is Phase.QUESTION:
                raise HTTPException(
                    status_code=422,
                    detail="prompt is under-specified for unattended generation; "
                    "the session stopped at a clarifying question",
                )
            if state.phase is not Phase.DONE or state.pipeline is None:
                raise HTTPException(
                    status_code=422,
                    detail=f"generation failed in phase {state.phase.value}: {state.failure}",
                )
            texts.append(serialize(state.pipeline))
        try:
            report = variance_report(texts)
        except UsageError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return report.to_dict()

    @app.post("/eval/elt")
    def eval_elt(body: EltBody) -> dict[str, Any]:
        suite = Path(body.suite)
        if not suite.is_dir():
            raise HTTPException(status_code=404, detail=f"suite directory not found: {suite}")
        if body.mode not in ("full", "no_question"):
            raise HTTPException(status_code=422, detail=f"unknown mode {body.mode!r}")
        workdir = svc.artifacts_root / "eval"
        report = run_elt_suite(suite, body.mode, workdir, svc.catalog, svc.examples)
        return report.to_dict()

    return app


def _load_destination(pipeline: Any) -> dict[str, str] | None:
    from .compiler import Literal

    for node in pipeline.tasks.values():
        comp = pipeline.components.get(node.component)
        if comp is None:
            continue
        binding = node.bindings.get("dest")
        if comp.input_type("dest") == "destination" and isinstance(binding, Literal):
            return binding.value
    return None
