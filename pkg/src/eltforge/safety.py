"""Static safety validation of pipelines and tool bodies.

Matching is token-level and statement-aware: string literals and comments are
stripped before any keyword check, so a quoted mention of a destructive
statement never trips a rule. Sanitization is statement-granular; anything
structural (a whole destructive component, a capability violation) is fatal
and leads to rejection rather than repair.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable

import yaml

if TYPE_CHECKING:  # avoids an import cycle; scan() only reads these duck-typed
    from .compiler import PipelineSpec


class VerdictStatus(str, Enum):
    PASS = "Pass"
    SANITIZED = "Sanitized"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class Finding:
    rule_id: str
    location: str
    matched_text: str
    severity: str  # fatal | sanitizable
    span: tuple[int, int] | None = None  # statement span within the scanned string

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "location": self.location,
            "matched_text": self.matched_text,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class SafetyVerdict:
    status: VerdictStatus
    findings: tuple[Finding, ...] = ()
    sanitized_pipeline: "PipelineSpec | None" = None

    def to_dict(self) -> dict[str, Any]:
        from .compiler import serialize

        return {
            "status": self.status.value,
            "findings": [f.to_dict() for f in self.findings],
            "sanitized_pipeline": (
                serialize(self.sanitized_pipeline) if self.sanitized_pipeline else None
            ),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "SafetyVerdict":
        from .compiler import parse

        sanitized = payload.get("sanitized_pipeline")
        return cls(
            status=VerdictStatus(payload["status"]),
            findings=tuple(
                Finding(
                    rule_id=f["rule_id"],
                    location=f["location"],
                    matched_text=f["matched_text"],
                    severity=f["severity"],
                )
                for f in payload.get("findings", [])
            ),
            sanitized_pipeline=parse(sanitized) if sanitized else None,
        )


class RuleSetError(ValueError):
    """The rule registry file is inconsistent with the implemented matchers."""


@dataclass(frozen=True)
class Rule:
    id: str
    severity: str
    summary: str


@dataclass(frozen=True)
class RuleSet:
    version: int
    rules: dict[str, Rule]

    def severity(self, rule_id: str) -> str:
        return self.rules[rule_id].severity

    def enabled(self, rule_id: str) -> bool:
        return rule_id in self.rules


@dataclass(frozen=True)
class Statement:
    """One ';'-delimited statement: its original span and its cleaned tokens."""

    start: int
    end: int  # exclusive, includes the trailing ';' when present
    tokens: tuple[str, ...]


_SEPARATORS = set(" \t\r\n(),")


def lex_statements(text: str) -> list[Statement]:
    """Split text into statements with literals and comments blanked out.

    Handles '...' (with '' escape), "..." strings, -- and # line comments
    (only when starting a word, so shell flags like --force survive), and
    /* */ block comments. Unterminated literals run to end of text.
    """
    cleaned = list(text)
    i, n = 0, len(text)

    def blank(a: int, b: int) -> None:
        for j in range(a, b):
            cleaned[j] = " "

    while i < n:
        ch = text[i]
        prev = text[i - 1] if i else " "
        if ch == "'":
            j = i + 1
            while j < n:
                if text[j] == "'" and j + 1 < n and text[j + 1] == "'":
                    j += 2
                    continue
                if text[j] == "'":
                    break
                j += 1
            blank(i, min(j + 1, n))
            i = j + 1
        elif ch == '"':
            j = text.find('"', i + 1)
            j = n - 1 if j == -1 else j
            blank(i, j + 1)
            i = j + 1
        elif text.startswith("--", i) and prev in _SEPARATORS | {" "} and (
            i + 2 >= n or text[i + 2] in " \t\r\n"
        ):
            j = text.find("\n", i)
            j = n if j == -1 else j
            blank(i, j)
            i = j
        elif ch == "#" and (i == 0 or prev in _SEPARATORS):
            j = text.find("\n", i)
            j = n if j == -1 else j
            blank(i, j)
            i = j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            j = n if j == -1 else j + 2
            blank(i, j)
            i = j
        else:
            i += 1

    stripped = "".join(cleaned)
    statements: list[Statement] = []
    start = 0
    for idx in range(n + 1):
        if idx == n or stripped[idx] == ";":
            chunk = stripped[start:idx]
            tokens = tuple(t for t in _split_tokens(chunk))
            end = idx + 1 if idx < n else n
            if tokens:
                statements.append(Statement(start=start, end=end, tokens=tokens))
            start = idx + 1
    return statements


def _split_tokens(chunk: str) -> Iterable[str]:
    token = []
    for ch in chunk:
        if ch in _SEPARATORS:
            if token:
                yield "".join(token)
                token = []
        else:
            token.append(ch)
    if token:
        yield "".join(token)


def _match_sql_drop(tokens: tuple[str, ...]) -> str | None:
    up = [t.upper() for t in tokens]
    for a, b in zip(up, up[1:]):
        if a == "DROP" and b in ("TABLE", "DATABASE"):
            return f"DROP {b}"
    return None


def _match_sql_truncate(tokens: tuple[str, ...]) -> str | None:
    up = [t.upper() for t in tokens]
    if up and up[0] == "TRUNCATE":
        return "TRUNCATE"
    for a, b in zip(up, up[1:]):
        if a == "TRUNCATE" and b == "TABLE":
            return "TRUNCATE TABLE"
    return None


def _match_sql_delete(tokens: tuple[str, ...]) -> str | None:
    up = [t.upper() for t in tokens]
    if "WHERE" in up:
        return None
    for a, b in zip(up, up[1:]):
        if a == "DELETE" and b == "FROM":
            return "DELETE FROM without WHERE"
    return None


def _match_sql_alter_drop_column(tokens: tuple[str, ...]) -> str | None:
    up = [t.upper() for t in tokens]
    if "ALTER" not in up:
        return None
    for a, b in zip(up, up[1:]):
        if a == "DROP" and b == "COLUMN":
            return "ALTER ... DROP COLUMN"
    return None


_RM_LONG_FLAGS = {"--recursive", "--force", "--no-preserve-root"}


def _match_shell_remove(tokens: tuple[str, ...]) -> str | None:
    low = [t.lower() for t in tokens]
    for i, t in enumerate(low):
        if t != "rm":
            continue
        for flag in low[i + 1 :]:
            if flag in _RM_LONG_FLAGS:
                return f"rm {flag}"
            if flag.startswith("-") and not flag.startswith("--") and (
                "r" in flag or "f" in flag
            ):
                return f"rm {flag}"
    return None


def _match_shell_format(tokens: tuple[str, ...]) -> str | None:
    for t in tokens:
        low = t.lower()
        if low == "mkfs" or low.startswith("mkfs."):
            return low
    return None


def _match_shell_devwrite(tokens: tuple[str, ...]) -> str | None:
    low = [t.lower() for t in tokens]
    if "dd" not in low:
        return None
    for t in low:
        if t.startswith("of=/dev/"):
            return f"dd {t}"
    return None


#: rule id -> matcher over one statement's tokens; returns matched text or None.
MATCHERS: dict[str, Callable[[tuple[str, ...]], str | None]] = {
    "sql.drop": _match_sql_drop,
    "sql.truncate": _match_sql_truncate,
    "sql.delete_unbounded": _match_sql_delete,
    "sql.alter_drop_column": _match_sql_alter_drop_column,
    "shell.remove": _match_shell_remove,
    "shell.format": _match_shell_format,
    "shell.devwrite": _match_shell_devwrite,
}

#: capability rules have no statement matcher; they are enforced structurally.
CAPABILITY_RULES = ("cap.scope", "cap.readonly")


def load_ruleset(path: Path) -> RuleSet:
    with path.open("r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    rules: dict[str, Rule] = {}
    for entry in doc.get("rules", []):
        rid = entry["id"]
        if rid in rules:
            raise RuleSetError(f"duplicate rule id: {rid}")
        if rid not in MATCHERS and rid not in CAPABILITY_RULES:
            raise RuleSetError(f"rule {rid!r} has no implementation")
        rules[rid] = Rule(id=rid, severity=entry["severity"], summary=entry.get("summary", ""))
    missing = (set(MATCHERS) | set(CAPABILITY_RULES)) - set(rules)
    if missing:
        raise RuleSetError(f"registry is missing rules: {sorted(missing)}")
    return RuleSet(version=int(doc.get("version", 1)), rules=rules)


def default_ruleset() -> RuleSet:
    with resources.as_file(resources.files("eltforge").joinpath("data/rules.yaml")) as p:
        return load_ruleset(p)


def scan_text(text: str, rules: RuleSet, location: str) -> list[Finding]:
    """Run every statement-level rule over one string value."""
    findings: list[Finding] = []
    for stmt in lex_statements(text):
        for rule_id, matcher in MATCHERS.items():
            if not rules.enabled(rule_id):
                continue
            matched = matcher(stmt.tokens)
            if matched is not None:
                findings.append(
                    Finding(
                        rule_id=rule_id,
                        location=location,
                        matched_text=matched,
                        severity=rules.severity(rule_id),
                        span=(stmt.start, stmt.end),
                    )
                )
    return findings


def scan_payload(obj: Any, rules: RuleSet, location: str) -> list[Finding]:
    """Recursively scan every string inside a nested dict/list payload."""
    findings: list[Finding] = []
    if isinstance(obj, str):
        findings.extend(scan_text(obj, rules, location))
    elif isinstance(obj, dict):
        for key in sorted(obj):
            findings.extend(scan_payload(obj[key], rules, f"{location}.{key}"))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            findings.extend(scan_payload(item, rules, f"{location}[{i}]"))
    return findings


def enforce_capabilities(p: "PipelineSpec", catalog: Any) -> list[Finding]:
    """Check every write-position task against its tool's capability grant.

    A task is in write position when it binds a destination-typed input.
    read_only tools may not hold one at all; scoped_write tools must stay
    inside their declared prefix.
    """
    from .compiler import Literal
    from .intent import DESTINATION_KINDS

    findings: list[Finding] = []
    for tid, node in sorted(p.tasks.items()):
        comp = p.components.get(node.component)
        if comp is None:
            continue
        for name, binding in sorted(node.bindings.items()):
            if comp.input_type(name) != "destination" or not isinstance(binding, Literal):
                continue
            dest = binding.value if isinstance(binding.value, dict) else {}
            location = f".tasks.{tid}.bindings.{name}"
            tool = catalog.get(comp.tool_ref)
            if tool is None:
                continue
            locator = str(dest.get("locator", "") or "")
            dest_name = str(dest.get("name", "") or "")
            write_path = f"{locator.rstrip('/')}/{dest_name}" if locator else dest_name
            if dest.get("kind") not in DESTINATION_KINDS:
                continue
            cap = tool.capability
            if cap.mode == "read_only":
                findings.append(
                    Finding("cap.readonly", location, f"{tool.id} -> {write_path}", "fatal")
                )
            elif cap.mode == "scoped_write" and not write_path.startswith(cap.prefix or ""):
                findings.append(
                    Finding("cap.scope", location, f"{write_path} outside {cap.prefix}", "fatal")
                )
    return findings


def _iter_pipeline_strings(p: "PipelineSpec", catalog: Any):
    """Yield (location, getter, setter) for every scannable string.

    Binding literals are writable (sanitization can rewrite them); tool bodies
    live in the catalog and are read-only here.
    """
    from .compiler import Literal

    for tid, node in sorted(p.tasks.items()):
        for name, binding in sorted(node.bindings.items()):
            if isinstance(binding, Literal):
                yield from _walk_strings(
                    node.bindings, name, binding.value, f".tasks.{tid}.bindings.{name}"
                )
    for cid, comp in sorted(p.components.items()):
        tool = catalog.get(comp.tool_ref)
        if tool is not None and tool.body is not None:
            yield from _walk_strings(None, None, tool.body, f".components.{cid}.body")


def _walk_strings(container: Any, key: Any, obj: Any, location: str):
    if isinstance(obj, str):
        yield location, obj, (container, key)
    elif isinstance(obj, dict):
        for k in sorted(obj):
            yield from _walk_strings(obj, k, obj[k], f"{location}.{k}")
    elif isinstance(obj, list):
        for i, item in enumerate(obj):
            yield from _walk_strings(obj, i, item, f"{location}[{i}]")


def _collect_findings(p: "PipelineSpec", catalog: Any, rules: RuleSet) -> list[Finding]:
    findings: list[Finding] = []
    for location, text, _slot in _iter_pipeline_strings(p, catalog):
        findings.extend(scan_text(text, rules, location))
    findings.extend(enforce_capabilities(p, catalog))
    return findings


def _excise(text: str, spans: list[tuple[int, int]]) -> str:
    out = text
    for start, end in sorted(spans, reverse=True):
        out = out[:start] + out[end:]
    return out.strip()


def scan(p: "PipelineSpec", catalog: Any, rules: RuleSet | None = None) -> SafetyVerdict:
    """Full pipeline scan: Pass, Sanitized (with a clean rewrite), or Rejected.

    Sanitization removes sanitizable statements from binding literals and only
    stands when the rewritten pipeline re-scans with zero findings and still
    satisfies the compile invariants the original satisfied; otherwise the
    verdict escalates to Rejected.
    """
    from .compiler import Literal, validate_compile

    if rules is None:
        rules = default_ruleset()
    findings = _collect_findings(p, catalog, rules)
    if not findings:
        return SafetyVerdict(VerdictStatus.PASS, ())
    if any(f.severity == "fatal" for f in findings):
        return SafetyVerdict(VerdictStatus.REJECTED, tuple(findings))

    # Sanitizable findings inside tool bodies cannot be rewritten from here
    # (the body belongs to the catalog, not the pipeline document).
    if any(f.location.startswith(".components.") for f in findings):
        return SafetyVerdict(VerdictStatus.REJECTED, tuple(findings))

    sanitized = copy.deepcopy(p)
    spans_by_location: dict[str, list[tuple[int, int]]] = {}
    for f in findings:
        if f.span is not None:
            spans_by_location.setdefault(f.location, []).append(f.span)

    for location, text, slot in _iter_pipeline_strings(sanitized, catalog):
        spans = spans_by_location.get(location)
        if not spans:
            continue
        container, key = slot
        new_text = _excise(text, spans)
        if container is None:
            return SafetyVerdict(VerdictStatus.REJECTED, tuple(findings))
        if isinstance(container[key], Literal):
            container[key] = Literal(new_text)
        else:
            container[key] = new_text

    if _collect_findings(sanitized, catalog, rules):
        return SafetyVerdict(VerdictStatus.REJECTED, tuple(findings))
    if validate_compile(p, catalog).pipeline_ok and not validate_compile(sanitized, catalog).pipeline_ok:
        return SafetyVerdict(VerdictStatus.REJECTED, tuple(findings))
    return SafetyVerdict(VerdictStatus.SANITIZED, tuple(findings), sanitized_pipeline=sanitized)
