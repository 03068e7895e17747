"""Tool catalog: specifications, lexical retrieval, and gated tool synthesis.

Retrieval is deterministic binary TF-IDF cosine over lowercased alphanumeric
tokens, with IDF computed once over the catalog corpus. Binary term frequency
(token presence) is used rather than raw counts so that adding a matching tag
can never lower a tool's score against a fixed query; smoothed IDF keeps every
weight positive. An embedding scorer can be swapped in behind the same
contract.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import yaml

#: Retrieval scores below this trigger the synthesis path.
SYNTHESIS_THRESHOLD = 0.35

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class CatalogError(ValueError):
    """Catalog file violates the tool schema (duplicate ids, bad fields)."""


class SynthesisRejected(RuntimeError):
    """A synthesized tool candidate failed the safety scan."""

    def __init__(self, findings: Sequence[Any]):
        super().__init__(f"synthesized tool rejected with {len(findings)} finding(s)")
        self.findings = list(findings)


class SynthesisMalformed(RuntimeError):
    """The provider returned an unusable tool candidate."""


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Capability:
    mode: str  # read_only | scoped_write | unrestricted
    prefix: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("read_only", "scoped_write", "unrestricted"):
            raise CatalogError(f"unknown capability mode: {self.mode!r}")
        if self.mode == "scoped_write" and not self.prefix:
            raise CatalogError("scoped_write capability needs a prefix")

    @classmethod
    def parse(cls, text: str) -> "Capability":
        if text.startswith("scoped_write:"):
            return cls("scoped_write", text.split(":", 1)[1])
        return cls(text)

    def render(self) -> str:
        if self.mode == "scoped_write":
            return f"scoped_write:{self.prefix}"
        return self.mode


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    optional: bool = False


@dataclass(frozen=True)
class ToolInterface:
    role: str  # extractor | transform | loader | validator
    inputs: tuple[ParamSpec, ...] = ()
    outputs: tuple[ParamSpec, ...] = ()

    def input(self, name: str) -> ParamSpec | None:
        return next((p for p in self.inputs if p.name == name), None)

    def output(self, name: str) -> ParamSpec | None:
        return next((p for p in self.outputs if p.name == name), None)


@dataclass(frozen=True)
class ToolSpec:
    id: str
    description: str
    tags: tuple[str, ...]
    interface: ToolInterface
    constraints: str = ""
    capability: Capability = Capability("read_only")
    origin: str = "curated"  # curated | synthesized
    body: dict[str, Any] | None = None  # transform DSL body for synthesized tools

    def __post_init__(self) -> None:
        if self.origin == "synthesized" and self.capability.mode == "unrestricted":
            raise CatalogError("synthesized tools may not be unrestricted")

    def document_tokens(self) -> list[str]:
        return tokenize(self.description) + [t for tag in self.tags for t in tokenize(tag)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "description": self.description,
            "tags": list(self.tags),
            "interface": {
                "role": self.interface.role,
                "inputs": [
                    {"name": p.name, "type": p.type, **({"optional": True} if p.optional else {})}
                    for p in self.interface.inputs
                ],
                "outputs": [{"name": p.name, "type": p.type} for p in self.interface.outputs],
            },
            "constraints": self.constraints,
            "capability": self.capability.render(),
            "origin": self.origin,
            **({"body": self.body} if self.body is not None else {}),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ToolSpec":
        try:
            iface = doc["interface"]
            return cls(
                id=doc["id"],
                description=doc["description"],
                tags=tuple(doc.get("tags", [])),
                interface=ToolInterface(
                    role=iface["role"],
                    inputs=tuple(
                        ParamSpec(p["name"], p["type"], bool(p.get("optional", False)))
                        for p in iface.get("inputs", [])
                    ),
                    outputs=tuple(
                        ParamSpec(p["name"], p["type"]) for p in iface.get("outputs", [])
                    ),
                ),
                constraints=doc.get("constraints", ""),
                capability=Capability.parse(doc.get("capability", "read_only")),
                origin=doc.get("origin", "curated"),
                body=doc.get("body"),
            )
        except KeyError as exc:
            raise CatalogError(f"tool document missing field {exc}") from exc


@dataclass(frozen=True)
class RetrievalQuery:
    text: str
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


class Catalog:
    """Immutable tool registry plus a serialized synthesized-tool overlay.

    IDF is computed over the corpus at load time and frozen; registering a
    synthesized tool rebuilds it under the writer lock so readers always see a
    consistent snapshot.
    """

    def __init__(self, tools: Iterable[ToolSpec] = ()):
        self._tools: dict[str, ToolSpec] = {}
        self._idf: dict[str, float] = {}
        self._lock = threading.Lock()
        for tool in tools:
            if tool.id in self._tools:
                raise CatalogError(f"duplicate tool id: {tool.id}")
            self._tools[tool.id] = tool
        self._rebuild_idf()

    def _rebuild_idf(self) -> None:
        n = len(self._tools)
        df: dict[str, int] = {}
        for tool in self._tools.values():
            for token in set(tool.document_tokens()):
                df[token] = df.get(token, 0) + 1
        self._idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
        self._default_idf = math.log(1 + n) + 1.0

    def idf(self, token: str) -> float:
        return self._idf.get(token, self._default_idf)

    def get(self, tool_id: str) -> ToolSpec | None:
        return self._tools.get(tool_id)

    def __len__(self) -> int:
        return len(self._tools)

    def __iter__(self):
        return iter(sorted(self._tools.values(), key=lambda t: t.id))

    def tools_with(self, role: str, tag: str | None = None) -> list[ToolSpec]:
        out = [t for t in self if t.interface.role == role]
        if tag is not None:
            out = [t for t in out if tag in t.tags]
        return out

    def register_synthesized(self, tool: ToolSpec, overlay_path: Path | None = None) -> None:
        if tool.origin != "synthesized":
            raise CatalogError("only synthesized tools may be registered at runtime")
        with self._lock:
            if tool.id in self._tools:
                raise CatalogError(f"duplicate tool id: {tool.id}")
            self._tools[tool.id] = tool
            self._rebuild_idf()
            if overlay_path is not None:
                overlay_path.parent.mkdir(parents=True, exist_ok=True)
                with overlay_path.open("a", encoding="utf-8") as fh:
                    fh.write("---\n")
                    yaml.safe_dump(tool.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path: Path, overlay_path: Path | None = None) -> "Catalog":
        """Load the curated YAML catalog (one document per tool) plus overlay."""
        tools = [ToolSpec.from_dict(doc) for doc in _load_docs(path)]
        if overlay_path is not None and overlay_path.exists():
            tools.extend(ToolSpec.from_dict(doc) for doc in _load_docs(overlay_path))
        return cls(tools)


def _load_docs(path: Path) -> list[dict[str, Any]]:
    with path.open("r", encoding="utf-8") as fh:
        return [doc for doc in yaml.safe_load_all(fh) if doc]


def _vector(tokens: Iterable[str], idf: Callable[[str], float]) -> dict[str, float]:
    return {t: idf(t) for t in set(tokens)}


def _cosine(u: dict[str, float], v: dict[str, float]) -> float:
    if not u or not v:
        return 0.0
    dot = sum(w * v[t] for t, w in u.items() if t in v)
    if dot == 0.0:
        return 0.0
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    return dot / (nu * nv)


def lexical_cosine(
    query_tokens: Iterable[str], doc_tokens: Iterable[str], idf: Callable[[str], float]
) -> float:
    """Binary TF-IDF cosine between two token streams under a frozen IDF."""
    return _cosine(_vector(query_tokens, idf), _vector(doc_tokens, idf))


def score(query: str, tool: ToolSpec, catalog: Catalog) -> float:
    """Similarity in [0,1] between query text and the tool's description+tags."""
    return lexical_cosine(tokenize(query), tool.document_tokens(), catalog.idf)


def retrieve(query: RetrievalQuery, catalog: Catalog) -> list[ToolSpec]:
    """Top-k tools by score, descending; ties broken by id ascending."""
    ranked = sorted(catalog, key=lambda t: (-score(query.text, t, catalog), t.id))
    return ranked[: query.k]


def _default_scanner() -> Callable[[dict[str, Any]], list[Any]]:
    from .safety import default_ruleset, scan_payload

    rules = default_ruleset()
    return lambda body: scan_payload(body, rules, location="tool.body")


def synthesize_tool(
    gap: str,
    provider: Any,
    catalog: Catalog,
    session_prefix: str,
    overlay_path: Path | None = None,
    scanner: Callable[[dict[str, Any]], list[Any]] | None = None,
) -> ToolSpec:
    """Ask the provider for a task-specific transform tool and gate it.

    The candidate must express its transform in the built-in DSL (an ``op``
    plus ``params``), pass the safety scan, and is always registered with a
    constrained capability; an unrestricted synthesized tool cannot exist.
    """
    from .providers import Message, ProviderRequest

    if scanner is None:
        scanner = _default_scanner()
    req = ProviderRequest(
        messages=(
            Message(
                "system",
                "Respond with JSON: {\"id\", \"description\", \"tags\", "
                "\"body\": {\"op\", \"params\"}}. The body op must be one of "
                "select, rename, filter, cast, dedupe, aggregate.",
            ),
            Message("user", f"Capability gap: {gap}"),
        ),
        response_format="json_object",
    )
    from .providers import ProviderMalformed

    try:
        resp = provider.complete(req)
        doc = json.loads(resp.text)
    except ProviderMalformed as exc:
        raise SynthesisMalformed(f"provider violated the JSON contract: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SynthesisMalformed(f"provider returned invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("body"), dict):
        raise SynthesisMalformed("candidate is missing a transform body")
    body = doc["body"]
    if body.get("op") not in ("select", "rename", "filter", "cast", "dedupe", "aggregate"):
        raise SynthesisMalformed(f"body op {body.get('op')!r} is not in the transform DSL")

    findings = scanner(body)
    fatal = [f for f in findings if getattr(f, "severity", "fatal") == "fatal"]
    if fatal:
        raise SynthesisRejected(fatal)

    digest = hashlib.sha256(gap.encode("utf-8")).hexdigest()[:8]
    tool = ToolSpec(
        id=str(doc.get("id") or f"synth_{digest}"),
        description=str(doc.get("description", gap)),
        tags=tuple(doc.get("tags", ())) + ("synthesized",),
        interface=ToolInterface(
            role="transform",
            inputs=(ParamSpec("data", "dataset"), ParamSpec("params", "object", optional=True)),
            outputs=(ParamSpec("data", "dataset"),),
        ),
        constraints="Composes the built-in transform DSL; no arbitrary code.",
        capability=Capability("scoped_write", session_prefix),
        origin="synthesized",
        body=body,
    )
    catalog.register_synthesized(tool, overlay_path)
    return tool
