"""The clarify-then-act loop: Distill, Reason, Question, Act, Observe.

The loop's one guarantee: action is never taken while required slots are
missing and question budget remains. Reasoning decides between asking and
acting from the sufficiency rule; proposed questions are vetted so a question
always targets an unfilled slot no matter what the provider suggested; once
the budget runs out, documented defaults are applied and flagged rather than
blocking forever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

import yaml

from .compiler import (
    BuildError,
    CompileReport,
    DEFAULT_CREATED_AT,
    PipelineSpec,
    build,
    parse as parse_pipeline,
    pipeline_id,
    serialize,
    validate_compile,
)
from .intent import (
    DestinationRef,
    ParsedUtterance,
    SlotStatus,
    TaskSpec,
    Transcript,
    UtteranceFormatError,
    distill,
    sufficiency,
    update_slots,
)
from .providers import (
    Message,
    ProviderMalformed,
    ProviderRequest,
    ProviderUnavailable,
)
from .safety import RuleSet, SafetyVerdict, VerdictStatus, scan
from .tools import (
    Catalog,
    RetrievalQuery,
    lexical_cosine,
    retrieve,
    score as tool_score,
    synthesize_tool,
    tokenize,
)


class Phase(str, Enum):
    DISTILL = "Distill"
    REASON = "Reason"
    QUESTION = "Question"
    ACT = "Act"
    OBSERVE = "Observe"
    DONE = "Done"
    FAILED = "Failed"


class LoopContractError(RuntimeError):
    """A step was requested that the loop's legal transitions do not allow."""


CANONICAL_QUESTIONS = {
    "sources": "Which data sources should this pipeline read from?",
    "destination": "Where should the data be stored?",
    "transforms": "What transformations should be applied to the data before it is stored?",
}

DEFAULT_DESTINATION = DestinationRef(kind="local_dir", locator="sandbox", name="output")


@dataclass(frozen=True)
class EngineConfig:
    question_budget: int = 5
    distill_budget: int = 4096
    retrieval_k: int = 5
    synthesis_threshold: float = 0.35
    provider_attempts: int = 3


@dataclass(frozen=True)
class LoopState:
    session: str
    phase: Phase = Phase.DISTILL
    question_count: int = 0
    spec: TaskSpec = field(default_factory=TaskSpec)
    transcript: Transcript = field(default_factory=Transcript)
    last_observation: str | None = None
    pending_slot: str | None = None
    observe_source: str | None = None  # answer | act
    defaults_applied: tuple[str, ...] = ()
    failure: str | None = None
    created_at: str = DEFAULT_CREATED_AT
    pipeline: PipelineSpec | None = None
    compile_report: CompileReport | None = None
    verdict: SafetyVerdict | None = None

    @property
    def terminal(self) -> bool:
        return self.phase in (Phase.DONE, Phase.FAILED)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session": self.session,
            "phase": self.phase.value,
            "question_count": self.question_count,
            "spec": self.spec.to_dict(),
            "transcript": self.transcript.to_dict(),
            "last_observation": self.last_observation,
            "pending_slot": self.pending_slot,
            "observe_source": self.observe_source,
            "defaults_applied": list(self.defaults_applied),
            "failure": self.failure,
            "created_at": self.created_at,
            "pipeline": serialize(self.pipeline) if self.pipeline else None,
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "LoopState":
        return cls(
            session=payload["session"],
            phase=Phase(payload["phase"]),
            question_count=payload["question_count"],
            spec=TaskSpec.from_dict(payload["spec"]),
            transcript=Transcript.from_dict(payload["transcript"]),
            last_observation=payload.get("last_observation"),
            pending_slot=payload.get("pending_slot"),
            observe_source=payload.get("observe_source"),
            defaults_applied=tuple(payload.get("defaults_applied", [])),
            failure=payload.get("failure"),
            created_at=payload.get("created_at", DEFAULT_CREATED_AT),
            pipeline=parse_pipeline(payload["pipeline"]) if payload.get("pipeline") else None,
            verdict=SafetyVerdict.from_dict(payload["verdict"]) if payload.get("verdict") else None,
        )


@dataclass(frozen=True)
class PipelineExample:
    id: str
    description: str
    body: str  # serialized pipeline document


class ExampleStore:
    """Small library of reference pipelines used to steer generation."""

    def __init__(self, examples: Sequence[PipelineExample] = ()):
        self.examples = sorted(examples, key=lambda e: e.id)
        self._idf = self._build_idf()

    def _build_idf(self) -> dict[str, float]:
        import math

        n = len(self.examples)
        df: dict[str, int] = {}
        for ex in self.examples:
            for token in set(tokenize(ex.description)):
                df[token] = df.get(token, 0) + 1
        self._default_idf = math.log(1 + n) + 1.0
        return {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}

    def idf(self, token: str) -> float:
        return self._idf.get(token, self._default_idf)

    def __len__(self) -> int:
        return len(self.examples)

    @classmethod
    def load(cls, directory: Path) -> "ExampleStore":
        examples = []
        for path in sorted(directory.glob("*.yaml")):
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
            examples.append(
                PipelineExample(
                    id=doc["id"], description=doc["description"], body=doc.get("pipeline", "")
                )
            )
        return cls(examples)


def retrieve_examples(spec: TaskSpec, store: ExampleStore, k: int) -> list[PipelineExample]:
    """Top-k reference pipelines for the current task, by the lexical scorer.

    An empty store is not an error: generation proceeds unguided.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(store) == 0:
        return []
    query_tokens = tokenize(spec.to_canonical_json())

    def example_score(ex: PipelineExample) -> float:
        return lexical_cosine(query_tokens, tokenize(ex.description), store.idf)

    ranked = sorted(store.examples, key=lambda e: (-example_score(e), e.id))
    return ranked[:k]


@dataclass(frozen=True)
class VettedQuestion:
    slot: str
    text: str
    accepted: bool  # False when the proposal was replaced by a canonical template


def vet_question(proposal: Any, spec: TaskSpec) -> VettedQuestion:
    """Accept a proposed question only if it targets an unfilled slot.

    Anything else is replaced by the canonical template for the
    highest-priority missing slot, so question quality never depends on
    provider quality. Calling this with nothing missing is a contract error.
    """
    missing = sufficiency(spec).missing
    if not missing:
        raise LoopContractError("vet_question called with no unfilled slots")
    if isinstance(proposal, dict):
        slot = proposal.get("slot")
        text = proposal.get("question")
        if slot in missing and isinstance(text, str) and text.strip():
            return VettedQuestion(slot=slot, text=text.strip(), accepted=True)
    top = missing[0]
    return VettedQuestion(slot=top, text=CANONICAL_QUESTIONS[top], accepted=False)


_PARSE_SYSTEM_PROMPT = (
    "Extract slot assignments from the user's message. Respond with JSON "
    '{"assignments": [{"slot": "sources|destination|transforms|constraints", '
    '"value": ..., "explicit_none": bool}]}. Return an empty list when the '
    "message assigns nothing."
)

_QUESTION_SYSTEM_PROMPT = (
    "Propose one clarifying question for the unresolved parts of the task. "
    'Respond with JSON {"slot": ..., "question": ...}.'
)


class Engine:
    """Drives one dialogue session from prompt to pipeline artifact."""

    def __init__(
        self,
        catalog: Catalog,
        examples: ExampleStore | None = None,
        config: EngineConfig = EngineConfig(),
        rules: RuleSet | None = None,
        trace: Callable[[dict[str, Any]], None] | None = None,
        overlay_path: Path | None = None,
    ):
        self.catalog = catalog
        self.examples = examples or ExampleStore()
        self.config = config
        self.rules = rules
        self._trace = trace or (lambda event: None)
        self.overlay_path = overlay_path

    # -- provider plumbing ---------------------------------------------------

    def _call(self, provider: Any, req: ProviderRequest) -> str:
        last: Exception | None = None
        for _ in range(self.config.provider_attempts):
            try:
                resp = provider.complete(req)
            except (ProviderUnavailable, ProviderMalformed) as exc:
                last = exc
                continue
            self._trace(
                {
                    "event": "provider",
                    "request": [m.content for m in req.messages],
                    "response": resp.text,
                }
            )
            return resp.text
        raise last if last is not None else ProviderUnavailable("no provider attempts made")

    def _parse_utterance(self, provider: Any, text: str) -> ParsedUtterance:
        raw = self._call(
            provider,
            ProviderRequest(
                messages=(Message("system", _PARSE_SYSTEM_PROMPT), Message("user", text)),
                response_format="json_object",
            ),
        )
        return ParsedUtterance.from_payload(json.loads(raw))

    # -- session lifecycle ----------------------------------------------------

    def start(
        self,
        prompt: str,
        provider: Any,
        session: str,
        created_at: str = DEFAULT_CREATED_AT,
    ) -> LoopState:
        state = LoopState(session=session, created_at=created_at)
        state = replace(state, transcript=state.transcript.append("user", prompt))
        try:
            utterance = self._parse_utterance(provider, prompt)
            spec = update_slots(state.spec, utterance)
        except (ProviderUnavailable, ProviderMalformed, UtteranceFormatError, ValueError) as exc:
            return self._fail(state, f"prompt parse failed: {exc}")
        state = replace(state, spec=spec, phase=Phase.DISTILL)
        self._emit(state, None, Phase.DISTILL, {"prompt": prompt})
        return state

    def step(self, state: LoopState, provider: Any, user_input: str | None = None) -> LoopState:
        """Apply exactly one legal transition."""
        if state.terminal:
            raise LoopContractError(f"cannot step a session in phase {state.phase.value}")
        if state.phase is Phase.DISTILL:
            return self._step_distill(state)
        if state.phase is Phase.REASON:
            return self._step_reason(state, provider)
        if state.phase is Phase.QUESTION:
            return self._step_question(state, provider, user_input)
        if state.phase is Phase.ACT:
            return self._step_act(state, provider)
        return self._step_observe(state)

    def run_until_blocked(self, state: LoopState, provider: Any) -> LoopState:
        """Advance until the loop needs user input or terminates."""
        while not state.terminal and state.phase is not Phase.QUESTION:
            state = self.step(state, provider)
        return state

    # -- transitions -----------------------------------------------------------

    def _emit(self, state: LoopState, from_phase: Phase | None, to_phase: Phase, detail: dict) -> None:
        self._trace(
            {
                "event": "transition",
                "from": from_phase.value if from_phase else None,
                "to": to_phase.value,
                "detail": detail,
                "state": state.to_dict(),
            }
        )

    def _fail(self, state: LoopState, cause: str) -> LoopState:
        out = replace(state, phase=Phase.FAILED, failure=cause)
        self._emit(out, state.phase, Phase.FAILED, {"cause": cause})
        return out

    def _step_distill(self, state: LoopState) -> LoopState:
        transcript = distill(state.transcript, self.config.distill_budget, state.spec)
        out = replace(state, phase=Phase.REASON, transcript=transcript)
        self._emit(out, Phase.DISTILL, Phase.REASON, {"distilled": transcript is not state.transcript})
        return out

    def _step_reason(self, state: LoopState, provider: Any) -> LoopState:
        suff = sufficiency(state.spec)
        if suff.sufficient:
            out = replace(state, phase=Phase.ACT)
            self._emit(out, Phase.REASON, Phase.ACT, {"missing": []})
            return out
        if state.question_count < self.config.question_budget:
            return self._enter_question(state, provider, suff.missing)
        # Budget exhausted: apply documented defaults and proceed, flagged.
        spec, defaults = self._apply_defaults(state.spec, suff.missing)
        out = replace(
            state,
            phase=Phase.ACT,
            spec=spec,
            defaults_applied=state.defaults_applied + defaults,
        )
        self._emit(out, Phase.REASON, Phase.ACT, {"missing": list(suff.missing), "defaults": list(defaults)})
        return out

    def _apply_defaults(self, spec: TaskSpec, missing: Sequence[str]) -> tuple[TaskSpec, tuple[str, ...]]:
        out = TaskSpec(
            sources=list(spec.sources),
            destination=spec.destination,
            transforms=list(spec.transforms),
            constraints=dict(spec.constraints),
            slot_status=dict(spec.slot_status),
        )
        applied = []
        if "destination" in missing:
            out.destination = DEFAULT_DESTINATION
            out.slot_status["destination"] = SlotStatus.FILLED
            applied.append("destination")
        if "transforms" in missing:
            out.transforms = []
            out.slot_status["transforms"] = SlotStatus.EXPLICIT_NONE
            applied.append("transforms")
        return out, tuple(applied)

    def _enter_question(self, state: LoopState, provider: Any, missing: Sequence[str]) -> LoopState:
        proposal: Any = None
        try:
            raw = self._call(
                provider,
                ProviderRequest(
                    messages=(
                        Message("system", _QUESTION_SYSTEM_PROMPT),
                        Message("user", f"Missing slots: {', '.join(missing)}"),
                    ),
                    response_format="json_object",
                ),
            )
            proposal = json.loads(raw)
        except (ProviderUnavailable, ProviderMalformed):
            proposal = None  # canonical template covers for the provider
        vetted = vet_question(proposal, state.spec)
        out = replace(
            state,
            phase=Phase.QUESTION,
            question_count=state.question_count + 1,
            pending_slot=vetted.slot,
            transcript=state.transcript.append("assistant", vetted.text),
        )
        self._emit(
            out,
            Phase.REASON,
            Phase.QUESTION,
            {"slot": vetted.slot, "question": vetted.text, "accepted": vetted.accepted},
        )
        return out

    def _step_question(self, state: LoopState, provider: Any, user_input: str | None) -> LoopState:
        if user_input is None:
            raise LoopContractError("Question phase needs the user's answer to proceed")
        transcript = state.transcript.append("user", user_input)
        try:
            utterance = self._parse_utterance(provider, user_input)
            spec = update_slots(state.spec, utterance)
        except (ProviderUnavailable, ProviderMalformed, UtteranceFormatError, ValueError) as exc:
            return self._fail(replace(state, transcript=transcript), f"answer parse failed: {exc}")
        observation = f"answer recorded for slot {state.pending_slot or 'unknown'}"
        out = replace(
            state,
            phase=Phase.OBSERVE,
            spec=spec,
            transcript=transcript,
            last_observation=observation,
            observe_source="answer",
            pending_slot=None,
        )
        self._emit(out, Phase.QUESTION, Phase.OBSERVE, {"observation": observation})
        return out

    def _select_tools(self, state: LoopState, provider: Any) -> None:
        """Ensure the catalog covers every transform the spec asks for.

        When an op has no curated or overlay tool and retrieval cannot find a
        sufficiently relevant one, a task-specific tool is synthesized and
        registered under the session's scope.
        """
        for step in state.spec.transforms:
            if self.catalog.tools_with("transform", step.op):
                continue
            if any(t.id == step.op for t in self.catalog.tools_with("transform")):
                continue
            query = RetrievalQuery(text=f"transform {step.op}", k=1)
            top = retrieve(query, self.catalog)
            top_score = tool_score(query.text, top[0], self.catalog) if top else 0.0
            if top_score >= self.config.synthesis_threshold:
                continue  # a relevant tool exists; leave resolution to build()
            synthesize_tool(
                gap=f"transform step {step.op!r} for task {state.spec.to_canonical_json()}",
                provider=provider,
                catalog=self.catalog,
                session_prefix=f"{state.session}/",
                overlay_path=self.overlay_path,
            )

    def _step_act(self, state: LoopState, provider: Any) -> LoopState:
        examples = retrieve_examples(state.spec, self.examples, self.config.retrieval_k)
        if not self.examples.examples:
            self._trace({"event": "warning", "message": "example store is empty; acting unguided"})
        try:
            self._select_tools(state, provider)
            pipeline = build(
                state.spec,
                list(self.catalog),
                session=state.session,
                created_at=state.created_at,
                warnings=tuple(f"defaulted:{slot}" for slot in state.defaults_applied),
            )
        except BuildError as exc:
            out = replace(
                state,
                phase=Phase.OBSERVE,
                last_observation=f"action failed: {exc}",
                observe_source="act",
                failure=str(exc),
                transcript=state.transcript.append("system", f"action failed: {exc}"),
            )
            self._emit(out, Phase.ACT, Phase.OBSERVE, {"error": str(exc)})
            return out
        except Exception as exc:  # synthesis rejection, provider failures
            out = replace(
                state,
                phase=Phase.OBSERVE,
                last_observation=f"action failed: {exc}",
                observe_source="act",
                failure=str(exc),
                transcript=state.transcript.append("system", f"action failed: {exc}"),
            )
            self._emit(out, Phase.ACT, Phase.OBSERVE, {"error": str(exc)})
            return out

        report = validate_compile(pipeline, self.catalog)
        verdict = scan(pipeline, self.catalog, self.rules)
        observation = (
            f"pipeline {pipeline_id(pipeline)}: compile_ok={report.pipeline_ok}, "
            f"verdict={verdict.status.value}"
        )
        out = replace(
            state,
            phase=Phase.OBSERVE,
            pipeline=pipeline,
            compile_report=report,
            verdict=verdict,
            last_observation=observation,
            observe_source="act",
            transcript=state.transcript.append("system", observation),
        )
        self._emit(
            out,
            Phase.ACT,
            Phase.OBSERVE,
            {
                "pipeline": pipeline_id(pipeline),
                "examples": [e.id for e in examples],
                "compile_ok": report.pipeline_ok,
                "verdict": verdict.status.value,
            },
        )
        return out

    def _step_observe(self, state: LoopState) -> LoopState:
        if state.observe_source == "answer":
            out = replace(state, phase=Phase.DISTILL, observe_source=None)
            self._emit(out, Phase.OBSERVE, Phase.DISTILL, {})
            return out
        if state.observe_source == "act":
            if (
                state.pipeline is not None
                and state.compile_report is not None
                and state.compile_report.pipeline_ok
                and state.verdict is not None
                and state.verdict.status in (VerdictStatus.PASS, VerdictStatus.SANITIZED)
            ):
                out = replace(state, phase=Phase.DONE, observe_source=None)
                self._emit(out, Phase.OBSERVE, Phase.DONE, {})
                return out
            cause = state.failure or (
                f"verdict {state.verdict.status.value}" if state.verdict else "compile failed"
            )
            return self._fail(replace(state, observe_source=None), cause)
        raise LoopContractError("Observe phase reached without an observation source")
