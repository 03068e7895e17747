"""Task-intent data model: slots, sufficiency rules, and the dialogue transcript.

Everything here is a plain value type. Operations return new objects instead of
mutating, so the engine can keep snapshots of dialogue state as immutable
history and replay them from traces.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

SOURCE_KINDS = frozenset({"local_dir", "http_url", "git_fixture", "dataset_fixture"})
DESTINATION_KINDS = frozenset({"object_store_dir", "table_store", "local_dir"})
TRANSFORM_OPS = frozenset({"select", "rename", "filter", "cast", "dedupe", "aggregate"})

#: Ops that may legitimately change the row count between extraction and load;
#: the row-count audit only tolerates a shortfall when one of these is present.
ROW_DROPPING_OPS = frozenset({"filter", "dedupe", "aggregate"})

#: Slots that must be resolved before a pipeline can be built, in the order
#: clarifying questions are asked.
REQUIRED_SLOTS = ("sources", "destination", "transforms")
ALL_SLOTS = REQUIRED_SLOTS + ("constraints",)

#: Number of trailing dialogue turns distillation never summarizes away.
PROTECTED_TURNS = 4


class SlotStatus(str, Enum):
    UNFILLED = "unfilled"
    FILLED = "filled"
    EXPLICIT_NONE = "explicit_none"


class AmbiguousUtteranceError(ValueError):
    """A single utterance assigned conflicting values to the same slot."""


class UtteranceFormatError(ValueError):
    """A slot-assignment payload did not match the expected shape."""


@dataclass(frozen=True)
class SourceRef:
    kind: str
    locator: str

    def __post_init__(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise UtteranceFormatError(f"unknown source kind: {self.kind!r}")

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "locator": self.locator}


@dataclass(frozen=True)
class DestinationRef:
    kind: str
    locator: str = ""
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in DESTINATION_KINDS:
            raise UtteranceFormatError(f"unknown destination kind: {self.kind!r}")

    def write_path(self) -> str:
        """Logical write target, the string capability prefixes are checked against."""
        if self.locator:
            return f"{self.locator.rstrip('/')}/{self.name}"
        return self.name

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "locator": self.locator, "name": self.name}


@dataclass(frozen=True)
class TransformStep:
    # op is normally one of TRANSFORM_OPS; it may also name a synthesized tool,
    # which the compiler resolves by id and the executor runs via its DSL body.
    op: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[a-z][a-z0-9_]*", self.op):
            raise UtteranceFormatError(f"bad transform op: {self.op!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"op": self.op, "params": self.params}


def _default_slot_status() -> dict[str, SlotStatus]:
    return {slot: SlotStatus.UNFILLED for slot in ALL_SLOTS}


@dataclass
class TaskSpec:
    """Structured intent extracted from dialogue: what to move, where, and how."""

    sources: list[SourceRef] = field(default_factory=list)
    destination: DestinationRef | None = None
    transforms: list[TransformStep] = field(default_factory=list)
    constraints: dict[str, str] = field(default_factory=dict)
    slot_status: dict[str, SlotStatus] = field(default_factory=_default_slot_status)

    def status(self, slot: str) -> SlotStatus:
        return self.slot_status[slot]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sources": [s.to_dict() for s in self.sources],
            "destination": self.destination.to_dict() if self.destination else None,
            "transforms": [t.to_dict() for t in self.transforms],
            "constraints": dict(self.constraints),
            "slots": {slot: st.value for slot, st in self.slot_status.items()},
        }

    def to_canonical_json(self) -> str:
        """Canonical serialization (sorted keys, no whitespace).

        This is the retrieval-query text and the input used when the task
        state has to be hashed or compared byte-for-byte.
        """
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "TaskSpec":
        dest = payload.get("destination")
        spec = cls(
            sources=[SourceRef(**s) for s in payload.get("sources", [])],
            destination=DestinationRef(**dest) if dest else None,
            transforms=[
                TransformStep(t["op"], dict(t.get("params", {})))
                for t in payload.get("transforms", [])
            ],
            constraints=dict(payload.get("constraints", {})),
        )
        for slot, st in payload.get("slots", {}).items():
            if slot in spec.slot_status:
                spec.slot_status[slot] = SlotStatus(st)
        return spec


@dataclass(frozen=True)
class SlotAssignment:
    """One slot update carried by an utterance, already parsed upstream."""

    slot: str
    value: Any = None
    explicit_none: bool = False

    def __post_init__(self) -> None:
        if self.slot not in ALL_SLOTS:
            raise UtteranceFormatError(f"unknown slot: {self.slot!r}")


@dataclass(frozen=True)
class ParsedUtterance:
    assignments: tuple[SlotAssignment, ...] = ()

    @classmethod
    def from_payload(cls, payload: Any) -> "ParsedUtterance":
        """Build from provider JSON, re-validating shape. Never trusts the wire."""
        if not isinstance(payload, dict):
            raise UtteranceFormatError("utterance payload must be an object")
        raw = payload.get("assignments", [])
        if not isinstance(raw, list):
            raise UtteranceFormatError("assignments must be a list")
        out = []
        for entry in raw:
            if not isinstance(entry, dict) or "slot" not in entry:
                raise UtteranceFormatError(f"bad assignment entry: {entry!r}")
            out.append(
                SlotAssignment(
                    slot=entry["slot"],
                    value=entry.get("value"),
                    explicit_none=bool(entry.get("explicit_none", False)),
                )
            )
        return cls(assignments=tuple(out))


@dataclass(frozen=True)
class SufficiencyResult:
    sufficient: bool
    missing: tuple[str, ...] = ()


def sufficiency(spec: TaskSpec) -> SufficiencyResult:
    """Deterministic completeness rule for a task spec.

    Sufficient iff sources and destination are filled and transforms is either
    filled or explicitly declared empty. Missing slots are reported in
    question-priority order.
    """
    missing = []
    if spec.status("sources") is not SlotStatus.FILLED:
        missing.append("sources")
    if spec.status("destination") is not SlotStatus.FILLED:
        missing.append("destination")
    if spec.status("transforms") is SlotStatus.UNFILLED:
        missing.append("transforms")
    return SufficiencyResult(sufficient=not missing, missing=tuple(missing))


def _apply_sources(spec: TaskSpec, a: SlotAssignment) -> None:
    if a.explicit_none:
        spec.sources = []
        spec.slot_status["sources"] = SlotStatus.EXPLICIT_NONE
        return
    if not isinstance(a.value, list) or not a.value:
        raise UtteranceFormatError("sources assignment needs a non-empty list")
    spec.sources = [SourceRef(s["kind"], s["locator"]) for s in a.value]
    spec.slot_status["sources"] = SlotStatus.FILLED


def _apply_destination(spec: TaskSpec, a: SlotAssignment) -> None:
    if a.explicit_none:
        spec.destination = None
        spec.slot_status["destination"] = SlotStatus.EXPLICIT_NONE
        return
    if not isinstance(a.value, dict):
        raise UtteranceFormatError("destination assignment needs an object")
    # Partial revisions merge field-wise: the latest statement wins per field,
    # so a rename does not discard an earlier kind/locator choice.
    current = spec.destination.to_dict() if spec.destination else {}
    merged = {**current, **{k: v for k, v in a.value.items() if v is not None}}
    if "kind" not in merged:
        raise UtteranceFormatError("destination revision before any kind was set")
    spec.destination = DestinationRef(
        kind=merged["kind"],
        locator=merged.get("locator", ""),
        name=merged.get("name", ""),
    )
    spec.slot_status["destination"] = SlotStatus.FILLED


def _apply_transforms(spec: TaskSpec, a: SlotAssignment) -> None:
    if a.explicit_none:
        spec.transforms = []
        spec.slot_status["transforms"] = SlotStatus.EXPLICIT_NONE
        return
    if not isinstance(a.value, list):
        raise UtteranceFormatError("transforms assignment needs a list")
    spec.transforms = [
        TransformStep(t["op"], dict(t.get("params", {}))) for t in a.value
    ]
    spec.slot_status["transforms"] = SlotStatus.FILLED


def _apply_constraints(spec: TaskSpec, a: SlotAssignment) -> None:
    if a.explicit_none:
        spec.slot_status["constraints"] = SlotStatus.EXPLICIT_NONE
        return
    if not isinstance(a.value, dict):
        raise UtteranceFormatError("constraints assignment needs an object")
    spec.constraints.update({str(k): str(v) for k, v in a.value.items()})
    spec.slot_status["constraints"] = SlotStatus.FILLED


_APPLIERS = {
    "sources": _apply_sources,
    "destination": _apply_destination,
    "transforms": _apply_transforms,
    "constraints": _apply_constraints,
}


def update_slots(spec: TaskSpec, utterance: ParsedUtterance) -> TaskSpec:
    """Apply an utterance's slot assignments; latest statement wins.

    Raises AmbiguousUtteranceError when one utterance carries two different
    values for the same slot. An empty utterance returns the spec unchanged.
    """
    by_slot: dict[str, SlotAssignment] = {}
    for a in utterance.assignments:
        seen = by_slot.get(a.slot)
        if seen is not None and seen != a:
            raise AmbiguousUtteranceError(
                f"conflicting assignments for slot {a.slot!r} in one utterance"
            )
        by_slot[a.slot] = a
    if not by_slot:
        return spec

    out = TaskSpec(
        sources=list(spec.sources),
        destination=spec.destination,
        transforms=list(spec.transforms),
        constraints=dict(spec.constraints),
        slot_status=dict(spec.slot_status),
    )
    for a in utterance.assignments:
        _APPLIERS[a.slot](out, a)
    return out


@dataclass(frozen=True)
class Turn:
    role: str  # user | assistant | system
    text: str
    timestamp: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "text": self.text, "timestamp": self.timestamp}


@dataclass(frozen=True)
class Transcript:
    turns: tuple[Turn, ...] = ()
    distilled_summary: str | None = None

    @property
    def token_estimate(self) -> int:
        chars = sum(len(t.text) for t in self.turns)
        chars += len(self.distilled_summary or "")
        return math.ceil(chars / 4)

    def append(self, role: str, text: str, timestamp: float = 0.0) -> "Transcript":
        return Transcript(
            turns=self.turns + (Turn(role, text, timestamp),),
            distilled_summary=self.distilled_summary,
        )

    def last_user_index(self) -> int | None:
        for i in range(len(self.turns) - 1, -1, -1):
            if self.turns[i].role == "user":
                return i
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "turns": [t.to_dict() for t in self.turns],
            "distilled_summary": self.distilled_summary,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "Transcript":
        return cls(
            turns=tuple(Turn(**t) for t in payload.get("turns", [])),
            distilled_summary=payload.get("distilled_summary"),
        )


def _render_summary(spec: TaskSpec | None) -> str:
    if spec is None:
        return "Earlier turns summarized; no structured task state was available."
    unresolved = ", ".join(sufficiency(spec).missing) or "none"
    return (
        "Earlier turns summarized. Task state so far: "
        f"{spec.to_canonical_json()}; unresolved slots: {unresolved}."
    )


def distill(t: Transcript, budget: int, spec: TaskSpec | None = None) -> Transcript:
    """Compress old turns into a structured summary once the estimate exceeds budget.

    The last PROTECTED_TURNS turns and the most recent user turn always
    survive. Idempotent at a fixed budget and spec: re-distilling an already
    distilled transcript is a no-op.
    """
    if budget <= 0:
        raise ValueError("distill budget must be positive")
    if t.token_estimate <= budget:
        return t

    protected = set(range(max(0, len(t.turns) - PROTECTED_TURNS), len(t.turns)))
    last_user = t.last_user_index()
    if last_user is not None:
        protected.add(last_user)
    kept = tuple(t.turns[i] for i in sorted(protected))
    summary = _render_summary(spec)
    if kept == t.turns and t.distilled_summary == summary:
        return t
    return Transcript(turns=kept, distilled_summary=summary)
