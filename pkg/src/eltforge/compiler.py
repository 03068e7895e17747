"""Pipeline IR: build from a sufficient task spec, static validation, YAML round-trip.

The IR is a minimal portable workflow document: component declarations plus a
task DAG with explicit bindings. Serialization is canonical (ir_version first,
all other keys sorted) so that equal pipelines are equal bytes; that property
is what version clustering and content-addressed artifact names rely on.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .intent import (
    DESTINATION_KINDS,
    ROW_DROPPING_OPS,
    SOURCE_KINDS,
    TaskSpec,
    sufficiency,
)
from .tools import ToolSpec

IR_VERSION = 1
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"

_TOP_LEVEL_KEYS = ("ir_version", "components", "metadata", "name", "parameters", "tasks")
_ID_RE = re.compile(r"[a-z][a-z0-9_]*")


class BuildError(RuntimeError):
    """No tool is available for a required source/destination/transform kind."""

    def __init__(self, role: str, kind: str):
        super().__init__(f"no {role} tool available for kind {kind!r}")
        self.role = role
        self.kind = kind


class ParseError(ValueError):
    """An IR document violates the schema; path points at the offending node."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Literal:
    value: Any


@dataclass(frozen=True)
class OutputRef:
    task: str
    output: str

    def render(self) -> str:
        return f"{self.task}.{self.output}"


#: A binding is a literal, a single upstream output, or an ordered fan-in of
#: upstream dataset outputs.
Binding = Any  # Literal | OutputRef | tuple[OutputRef, ...]


@dataclass(frozen=True)
class ComponentSpec:
    tool_ref: str
    inputs: dict[str, str] = field(default_factory=dict)   # name -> type, "?" = optional
    outputs: dict[str, str] = field(default_factory=dict)  # name -> type

    def required_inputs(self) -> list[str]:
        return [n for n, t in self.inputs.items() if not t.endswith("?")]

    def input_type(self, name: str) -> str | None:
        t = self.inputs.get(name)
        return t.rstrip("?") if t else None


@dataclass(frozen=True)
class TaskNode:
    component: str
    bindings: dict[str, Binding] = field(default_factory=dict)
    depends_on: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineMetadata:
    created_at: str = DEFAULT_CREATED_AT
    session: str = "local"
    provenance: dict[str, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineSpec:
    name: str
    parameters: dict[str, Any] = field(default_factory=dict)
    components: dict[str, ComponentSpec] = field(default_factory=dict)
    tasks: dict[str, TaskNode] = field(default_factory=dict)
    metadata: PipelineMetadata = field(default_factory=PipelineMetadata)

    def task_dependencies(self, task_id: str) -> set[str]:
        """Upstream task ids implied by bindings plus explicit depends_on."""
        node = self.tasks[task_id]
        deps = set(node.depends_on)
        for binding in node.bindings.values():
            for ref in _iter_refs(binding):
                deps.add(ref.task)
        return deps


def _iter_refs(binding: Binding) -> Iterable[OutputRef]:
    if isinstance(binding, OutputRef):
        yield binding
    elif isinstance(binding, tuple):
        yield from binding


def _binding_to_doc(binding: Binding) -> Any:
    if isinstance(binding, Literal):
        return {"value": binding.value}
    if isinstance(binding, OutputRef):
        return {"from": binding.render()}
    return [{"from": r.render()} for r in binding]


def _binding_from_doc(doc: Any, path: str) -> Binding:
    def one(entry: Any, p: str, allow_value: bool) -> Binding:
        if not isinstance(entry, dict):
            raise ParseError(p, "binding must be a mapping or a list of mappings")
        keys = set(entry)
        if keys == {"from"}:
            ref = entry["from"]
            if not isinstance(ref, str) or ref.count(".") != 1:
                raise ParseError(p, f"binding reference must look like 'task.output', got {ref!r}")
            task, output = ref.split(".")
            return OutputRef(task, output)
        if keys == {"value"} and allow_value:
            return Literal(entry["value"])
        raise ParseError(p, f"binding must have exactly one of 'value'/'from', got {sorted(keys)}")

    if isinstance(doc, list):
        if not doc:
            raise ParseError(path, "fan-in binding list may not be empty")
        return tuple(one(e, f"{path}[{i}]", allow_value=False) for i, e in enumerate(doc))
    return one(doc, path, allow_value=True)


def serialize(p: PipelineSpec) -> str:
    """Canonical YAML: ir_version pinned first, everything below sorted."""
    body = {
        "components": {
            cid: {
                "tool_ref": c.tool_ref,
                "inputs": dict(sorted(c.inputs.items())),
                "outputs": dict(sorted(c.outputs.items())),
            }
            for cid, c in sorted(p.components.items())
        },
        "metadata": {
            "created_at": p.metadata.created_at,
            "provenance": dict(sorted(p.metadata.provenance.items())),
            "session": p.metadata.session,
            "warnings": list(p.metadata.warnings),
        },
        "name": p.name,
        "parameters": dict(sorted(p.parameters.items())),
        "tasks": {
            tid: {
                "component": t.component,
                "bindings": {n: _binding_to_doc(b) for n, b in sorted(t.bindings.items())},
                "depends_on": sorted(t.depends_on),
            }
            for tid, t in sorted(p.tasks.items())
        },
    }
    # width is pinned high so scalars never line-fold; canonical bytes must
    # not depend on value lengths
    return f"ir_version: {IR_VERSION}\n" + yaml.safe_dump(
        body, sort_keys=True, default_flow_style=False, allow_unicode=True, width=100000
    )


def pipeline_hash(p: PipelineSpec) -> str:
    return hashlib.sha256(serialize(p).encode("utf-8")).hexdigest()


def pipeline_id(p: PipelineSpec) -> str:
    return pipeline_hash(p)[:12]


def _require_mapping(doc: Any, path: str) -> dict:
    if not isinstance(doc, dict):
        raise ParseError(path, "expected a mapping")
    return doc


def _check_id(name: Any, path: str) -> str:
    if not isinstance(name, str) or not _ID_RE.fullmatch(name):
        raise ParseError(path, f"bad identifier: {name!r}")
    return name


def parse(text: str) -> PipelineSpec:
    """Parse and schema-check an IR document; rejects unknown top-level keys."""
    first = next((line for line in text.splitlines() if line.strip()), "")
    if not first.startswith("ir_version:"):
        raise ParseError(".ir_version", "ir_version must be the first key")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(".", f"invalid YAML: {exc}") from exc
    doc = _require_mapping(doc, ".")

    for key in doc:
        if key not in _TOP_LEVEL_KEYS:
            raise ParseError(f".{key}", "unknown top-level key")
    for key in _TOP_LEVEL_KEYS:
        if key not in doc:
            raise ParseError(f".{key}", "missing required key")
    if doc["ir_version"] != IR_VERSION:
        raise ParseError(".ir_version", f"unsupported ir_version: {doc['ir_version']!r}")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ParseError(".name", "name must be a non-empty string")

    components: dict[str, ComponentSpec] = {}
    for cid, cdoc in _require_mapping(doc["components"], ".components").items():
        path = f".components.{cid}"
        _check_id(cid, path)
        cdoc = _require_mapping(cdoc, path)
        unknown = set(cdoc) - {"tool_ref", "inputs", "outputs"}
        if unknown:
            raise ParseError(f"{path}.{sorted(unknown)[0]}", "unknown component key")
        if "tool_ref" not in cdoc or not isinstance(cdoc["tool_ref"], str):
            raise ParseError(f"{path}.tool_ref", "tool_ref must be a string")
        components[cid] = ComponentSpec(
            tool_ref=cdoc["tool_ref"],
            inputs={str(k): str(v) for k, v in _require_mapping(cdoc.get("inputs", {}), f"{path}.inputs").items()},
            outputs={str(k): str(v) for k, v in _require_mapping(cdoc.get("outputs", {}), f"{path}.outputs").items()},
        )

    tasks: dict[str, TaskNode] = {}
    for tid, tdoc in _require_mapping(doc["tasks"], ".tasks").items():
        path = f".tasks.{tid}"
        _check_id(tid, path)
        tdoc = _require_mapping(tdoc, path)
        unknown = set(tdoc) - {"component", "bindings", "depends_on"}
        if unknown:
            raise ParseError(f"{path}.{sorted(unknown)[0]}", "unknown task key")
        if "component" not in tdoc or not isinstance(tdoc["component"], str):
            raise ParseError(f"{path}.component", "component must be a string")
        bindings = {
            str(name): _binding_from_doc(b, f"{path}.bindings.{name}")
            for name, b in _require_mapping(tdoc.get("bindings", {}), f"{path}.bindings").items()
        }
        deps = tdoc.get("depends_on", [])
        if not isinstance(deps, list) or not all(isinstance(d, str) for d in deps):
            raise ParseError(f"{path}.depends_on", "depends_on must be a list of task ids")
        tasks[tid] = TaskNode(
            component=tdoc["component"], bindings=bindings, depends_on=tuple(sorted(deps))
        )

    mdoc = _require_mapping(doc["metadata"], ".metadata")
    unknown = set(mdoc) - {"created_at", "session", "provenance", "warnings"}
    if unknown:
        raise ParseError(f".metadata.{sorted(unknown)[0]}", "unknown metadata key")
    metadata = PipelineMetadata(
        created_at=str(mdoc.get("created_at", DEFAULT_CREATED_AT)),
        session=str(mdoc.get("session", "local")),
        provenance={str(k): str(v) for k, v in mdoc.get("provenance", {}).items()},
        warnings=tuple(mdoc.get("warnings", [])),
    )

    return PipelineSpec(
        name=doc["name"],
        parameters=dict(_require_mapping(doc["parameters"], ".parameters")),
        components=components,
        tasks=tasks,
        metadata=metadata,
    )


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9_]+", "_", text.lower()).strip("_") or "pipeline"


def _interface_types(tool: ToolSpec) -> tuple[dict[str, str], dict[str, str]]:
    inputs = {p.name: p.type + ("?" if p.optional else "") for p in tool.interface.inputs}
    outputs = {p.name: p.type for p in tool.interface.outputs}
    return inputs, outputs


def build(
    spec: TaskSpec,
    tools: Sequence[ToolSpec],
    *,
    name: str | None = None,
    session: str = "local",
    created_at: str = DEFAULT_CREATED_AT,
    warnings: Sequence[str] = (),
) -> PipelineSpec:
    """Compile a sufficient task spec plus selected tools into the standard shape.

    One extraction task per source, a linear transform chain (fanning in all
    extractions at the first step), one load task, and one row-count audit task
    wired to the extraction and load outputs. Pure function of its inputs.
    """
    suff = sufficiency(spec)
    if not suff.sufficient:
        raise BuildError("spec", f"insufficient (missing: {', '.join(suff.missing)})")
    assert spec.destination is not None

    ordered = sorted(tools, key=lambda t: t.id)

    def pick(role: str, kind: str) -> ToolSpec:
        for t in ordered:
            if t.interface.role == role and kind in t.tags:
                return t
        for t in ordered:
            if t.interface.role == role and t.id == kind:
                return t
        raise BuildError(role, kind)

    components: dict[str, ComponentSpec] = {}
    provenance: dict[str, str] = {}

    def use(tool: ToolSpec) -> str:
        if tool.id not in components:
            inputs, outputs = _interface_types(tool)
            components[tool.id] = ComponentSpec(tool.id, inputs, outputs)
            provenance[tool.id] = tool.origin
        return tool.id

    tasks: dict[str, TaskNode] = {}
    extract_ids = []
    for i, src in enumerate(spec.sources, 1):
        tool = pick("extractor", src.kind)
        tid = f"extract_{i}"
        tasks[tid] = TaskNode(use(tool), {"source": Literal(src.to_dict())})
        extract_ids.append(tid)

    upstream: Binding
    if len(extract_ids) == 1:
        upstream = OutputRef(extract_ids[0], "data")
    else:
        upstream = tuple(OutputRef(t, "data") for t in extract_ids)

    # row-dropping declarations come from the tool's effective DSL op, so a
    # synthesized tool whose body filters/dedupes/aggregates counts as well
    allow_loss = False
    for j, step in enumerate(spec.transforms, 1):
        tool = pick("transform", step.op)
        effective_op = tool.body.get("op") if tool.body else step.op
        allow_loss = allow_loss or effective_op in ROW_DROPPING_OPS
        tid = f"transform_{j}"
        tasks[tid] = TaskNode(
            use(tool), {"data": upstream, "params": Literal(dict(step.params))}
        )
        upstream = OutputRef(tid, "data")

    loader = pick("loader", spec.destination.kind)
    tasks["load"] = TaskNode(
        use(loader), {"data": upstream, "dest": Literal(spec.destination.to_dict())}
    )

    validator = pick("validator", "row_count_compare")
    tasks["validate"] = TaskNode(
        use(validator),
        {
            "extracted": tuple(OutputRef(t, "data") for t in extract_ids),
            "loaded": OutputRef("load", "rows_loaded"),
            "allow_row_loss": Literal(allow_loss),
        },
    )

    return PipelineSpec(
        name=name or f"elt_{_slug(spec.destination.name or spec.destination.kind)}",
        parameters={},
        components=components,
        tasks=tasks,
        metadata=PipelineMetadata(
            created_at=created_at,
            session=session,
            provenance=provenance,
            warnings=tuple(warnings),
        ),
    )


@dataclass(frozen=True)
class ComponentStatus:
    ok: bool
    reason: str | None = None


@dataclass(frozen=True)
class CompileReport:
    statuses: dict[str, ComponentStatus]
    pipeline_ok: bool
    problems: tuple[str, ...] = ()

    @property
    def ok_fraction(self) -> float:
        if not self.statuses:
            return 0.0
        return sum(1 for s in self.statuses.values() if s.ok) / len(self.statuses)

    def to_dict(self) -> dict[str, Any]:
        return {
            "statuses": {
                k: {"ok": s.ok, "reason": s.reason} for k, s in sorted(self.statuses.items())
            },
            "pipeline_ok": self.pipeline_ok,
            "problems": list(self.problems),
            "ok_fraction": self.ok_fraction,
        }


_LITERAL_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "source": lambda v: isinstance(v, dict) and v.get("kind") in SOURCE_KINDS,
    "destination": lambda v: isinstance(v, dict) and v.get("kind") in DESTINATION_KINDS,
}


def validate_compile(p: PipelineSpec, catalog: Any) -> CompileReport:
    """Static compilability check; findings land in the report, never raised.

    Per component: the tool_ref resolves, every task instantiating it binds all
    required inputs with type-correct values, and references resolve to real
    upstream outputs. Graph-level: the dependency graph is acyclic and tasks
    downstream of a dangling reference are flagged as unreachable.
    """
    errors: dict[str, list[str]] = {cid: [] for cid in p.components}
    problems: list[str] = []

    def component_key(tid: str) -> str:
        comp = p.tasks[tid].component
        return comp if comp in errors else f"task:{tid}"

    def add_error(key: str, message: str) -> None:
        errors.setdefault(key, []).append(message)

    for cid, comp in p.components.items():
        if catalog.get(comp.tool_ref) is None:
            add_error(cid, f".components.{cid}.tool_ref: unknown tool {comp.tool_ref!r}")

    dangling_tasks: set[str] = set()
    for tid, node in p.tasks.items():
        key = component_key(tid)
        comp = p.components.get(node.component)
        if comp is None:
            add_error(key, f".tasks.{tid}.component: unknown component {node.component!r}")
            continue
        for name in comp.required_inputs():
            if name not in node.bindings:
                add_error(key, f".tasks.{tid}.bindings: missing required input {name!r}")
        for name, binding in node.bindings.items():
            path = f".tasks.{tid}.bindings.{name}"
            declared = comp.input_type(name)
            if declared is None:
                add_error(key, f"{path}: component declares no input {name!r}")
                continue
            if isinstance(binding, Literal):
                if declared in ("dataset", "audit"):
                    add_error(key, f"{path}: {declared} inputs cannot be bound to literals")
                elif declared in _LITERAL_CHECKS and not _LITERAL_CHECKS[declared](binding.value):
                    add_error(key, f"{path}: literal does not match declared type {declared!r}")
                continue
            refs = list(_iter_refs(binding))
            if isinstance(binding, tuple) and declared != "dataset":
                add_error(key, f"{path}: fan-in bindings are only valid for dataset inputs")
                continue
            for ref in refs:
                if ref.task not in p.tasks:
                    add_error(key, f"{path}: references unknown task {ref.task!r}")
                    dangling_tasks.add(tid)
                    continue
                up = p.components.get(p.tasks[ref.task].component)
                out_type = up.outputs.get(ref.output) if up else None
                if out_type is None:
                    add_error(key, f"{path}: references unknown output {ref.render()!r}")
                elif out_type != declared:
                    add_error(
                        key,
                        f"{path}: output {ref.render()!r} has type {out_type!r}, "
                        f"expected {declared!r}",
                    )
        for dep in node.depends_on:
            if dep not in p.tasks:
                add_error(key, f".tasks.{tid}.depends_on: unknown task {dep!r}")
                dangling_tasks.add(tid)

    if not p.tasks:
        problems.append("pipeline declares no tasks")

    # Cycle detection over binding- and declared-dependencies (Kahn).
    indeg = {tid: 0 for tid in p.tasks}
    downstream: dict[str, set[str]] = {tid: set() for tid in p.tasks}
    for tid in p.tasks:
        for dep in p.task_dependencies(tid):
            if dep in p.tasks:
                indeg[tid] += 1
                downstream[dep].add(tid)
    queue = sorted(tid for tid, d in indeg.items() if d == 0)
    order: list[str] = []
    while queue:
        tid = queue.pop(0)
        order.append(tid)
        for child in sorted(downstream[tid]):
            indeg[child] -= 1
            if indeg[child] == 0:
                queue.append(child)
        queue.sort()
    if len(order) != len(p.tasks):
        cyclic = sorted(set(p.tasks) - set(order))
        msg = f"dependency cycle involving tasks: {', '.join(cyclic)}"
        problems.append(msg)
        for tid in cyclic:
            add_error(component_key(tid), f".tasks.{tid}: {msg}")

    # Tasks downstream of a dangling reference can never be scheduled.
    unreachable: set[str] = set()
    frontier = set(dangling_tasks)
    while frontier:
        nxt = set()
        for tid in frontier:
            for child in downstream.get(tid, ()):
                if child not in unreachable and child not in dangling_tasks:
                    unreachable.add(child)
                    nxt.add(child)
        frontier = nxt
    for tid in sorted(unreachable):
        problems.append(f"task {tid!r} is unreachable: an upstream dependency can never run")

    statuses = {
        key: ComponentStatus(ok=not msgs, reason="; ".join(msgs) or None)
        for key, msgs in errors.items()
    }
    pipeline_ok = all(s.ok for s in statuses.values()) and not problems and bool(p.tasks)
    return CompileReport(statuses=statuses, pipeline_ok=pipeline_ok, problems=tuple(problems))
