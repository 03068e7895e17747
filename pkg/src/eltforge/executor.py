"""Local DAG executor over fixture-backed stores.

Interprets the pipeline IR: tasks run in topological order, independent
branches may run on a thread pool, every task output is written once and
read-only afterward, and results are identical under any legal schedule. The
storage layout emulates remote backends offline: an object store is a
bucket/key directory tree of CSV parts, a table store is one CSV per table
with a schema sidecar, and a local dir is a plain directory of CSV files.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .compiler import Literal, OutputRef, PipelineSpec
from .intent import TRANSFORM_OPS
from .safety import SafetyVerdict, VerdictStatus

COLUMN_TYPES = ("string", "int", "float", "bool")


class TransformError(ValueError):
    """A transform step hit an unknown column or an unconvertible cell."""


class ExecutionRefused(RuntimeError):
    """The pipeline has no Pass/Sanitized safety verdict recorded."""


class _TaskFailure(Exception):
    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class Dataset:
    """Immutable typed table: ordered columns, row tuples aligned to them."""

    columns: tuple[str, ...]
    types: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]
    provenance: str | None = None

    def __post_init__(self) -> None:
        if len(self.columns) != len(self.types):
            raise ValueError("columns and types must align")
        for t in self.types:
            if t not in COLUMN_TYPES:
                raise ValueError(f"unknown column type: {t!r}")

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def schema(self) -> dict[str, str]:
        return dict(zip(self.columns, self.types))

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise TransformError(f"unknown column: {name!r}") from None

    def with_provenance(self, task_id: str) -> "Dataset":
        return Dataset(self.columns, self.types, self.rows, provenance=task_id)


@dataclass(frozen=True)
class AuditResult:
    rows_extracted: int
    rows_loaded: int
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows_extracted": self.rows_extracted,
            "rows_loaded": self.rows_loaded,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class TaskResult:
    status: str  # succeeded | failed | skipped
    reason: str | None = None
    rows_in: int | None = None
    rows_out: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "reason": self.reason,
            "rows_in": self.rows_in,
            "rows_out": self.rows_out,
        }


@dataclass(frozen=True)
class RunRecord:
    pipeline: str
    tasks: dict[str, TaskResult]
    audit: AuditResult | None
    wall_time_s: float
    succeeded: bool

    def comparable(self) -> dict[str, Any]:
        """Schedule-independent view: everything except wall time."""
        return {
            "pipeline": self.pipeline,
            "tasks": {tid: r.to_dict() for tid, r in sorted(self.tasks.items())},
            "audit": self.audit.to_dict() if self.audit else None,
            "succeeded": self.succeeded,
        }

    def to_dict(self) -> dict[str, Any]:
        out = self.comparable()
        out["wall_time_s"] = self.wall_time_s
        return out


@dataclass
class Backends:
    """Where the executor reads fixtures from and writes destinations to."""

    data_root: Path
    fixtures_root: Path | None = None
    http_base_url: str | None = None
    http_enabled: bool = False

    def fixture_dir(self, locator: str) -> Path:
        root = self.fixtures_root or self.data_root
        p = Path(locator)
        return p if p.is_absolute() else root / locator


# ---------------------------------------------------------------------------
# CSV / JSONL io


def _format_cell(value: Any, ctype: str) -> str:
    if ctype == "bool":
        return "true" if value else "false"
    if ctype == "float":
        return repr(float(value))
    return str(value)


def _parse_cell(text: str, ctype: str, row_index: int, column: str) -> Any:
    try:
        if ctype == "int":
            return int(text)
        if ctype == "float":
            return float(text)
        if ctype == "bool":
            if text in ("true", "false"):
                return text == "true"
            raise ValueError(text)
        return text
    except ValueError:
        raise TransformError(
            f"cannot parse {text!r} as {ctype} (row {row_index}, column {column!r})"
        ) from None


def dataset_to_csv(d: Dataset) -> str:
    """Canonical CSV serialization: header, minimal quoting, CRLF line ends."""
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
    writer.writerow(d.columns)
    for row in d.rows:
        writer.writerow([_format_cell(v, t) for v, t in zip(row, d.types)])
    return buf.getvalue()


def normalize_csv(text: str) -> str:
    """Re-emit arbitrary CSV text in the canonical form used by the loaders."""
    rows = list(csv.reader(io.StringIO(text)))
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
    writer.writerows(rows)
    return buf.getvalue()


def _infer_types(columns: Sequence[str], raw_rows: Sequence[Sequence[str]]) -> tuple[str, ...]:
    types = []
    for i, _ in enumerate(columns):
        values = [row[i] for row in raw_rows]
        types.append(_infer_one(values))
    return tuple(types)


def _infer_one(values: Sequence[str]) -> str:
    if not values:
        return "string"
    if all(_is_int(v) for v in values):
        return "int"
    if all(_is_float(v) for v in values):
        return "float"
    if all(v in ("true", "false") for v in values):
        return "bool"
    return "string"


def _is_int(v: str) -> bool:
    try:
        int(v)
        return True
    except ValueError:
        return False


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def read_csv_dataset(path: Path, schema: dict[str, str] | None = None) -> Dataset:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = tuple(next(reader))
        except StopIteration:
            raise _TaskFailure("io", f"empty CSV file: {path}") from None
        raw_rows = [tuple(r) for r in reader]
    for r_i, row in enumerate(raw_rows):
        if len(row) != len(columns):
            raise _TaskFailure("schema", f"{path}: row {r_i} has {len(row)} cells")
    if schema is not None:
        missing = [c for c in columns if c not in schema]
        if missing:
            raise _TaskFailure("schema", f"{path}: columns missing from schema: {missing}")
        types = tuple(schema[c] for c in columns)
    else:
        sidecar = path.with_suffix(".schema.json")
        if sidecar.exists():
            doc = json.loads(sidecar.read_text(encoding="utf-8"))
            declared = {c["name"]: c["type"] for c in doc["columns"]}
            types = tuple(declared.get(c, "string") for c in columns)
        else:
            types = _infer_types(columns, raw_rows)
    rows = tuple(
        tuple(_parse_cell(cell, t, r_i, c) for cell, t, c in zip(row, types, columns))
        for r_i, row in enumerate(raw_rows)
    )
    return Dataset(columns=columns, types=types, rows=rows)


_JSON_TYPES = [(bool, "bool"), (int, "int"), (float, "float"), (str, "string")]


def read_jsonl_dataset(path: Path) -> Dataset:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _TaskFailure("io", f"{path}:{line_no + 1}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise _TaskFailure("schema", f"{path}:{line_no + 1}: expected an object")
            records.append(obj)
    if not records:
        raise _TaskFailure("io", f"no records in {path}")
    columns = tuple(records[0].keys())
    types = []
    for c in columns:
        v = records[0][c]
        for pytype, name in _JSON_TYPES:
            if isinstance(v, pytype):
                types.append(name)
                break
        else:
            raise _TaskFailure("schema", f"{path}: unsupported value type for {c!r}")
    rows = []
    for r_i, obj in enumerate(records):
        if set(obj) != set(columns):
            raise _TaskFailure("schema", f"{path}: record {r_i} keys differ from header record")
        row = []
        for c, t in zip(columns, types):
            v = obj[c]
            if t == "float" and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            expected = {"bool": bool, "int": int, "float": float, "string": str}[t]
            if not isinstance(v, expected) or (expected is int and isinstance(v, bool)):
                raise _TaskFailure("schema", f"{path}: record {r_i} field {c!r} is not {t}")
            row.append(v)
        rows.append(tuple(row))
    return Dataset(columns=columns, types=tuple(types), rows=tuple(rows))


def _read_data_dir(directory: Path) -> Dataset:
    if not directory.is_dir():
        raise _TaskFailure("io", f"missing fixture directory: {directory}")
    files = sorted(
        [p for p in directory.rglob("*") if p.suffix in (".csv", ".jsonl") and p.is_file()]
    )
    files = [p for p in files if not p.name.endswith(".schema.json")]
    if not files:
        raise _TaskFailure("io", f"no data files under {directory}")
    parts = []
    for p in files:
        parts.append(read_csv_dataset(p) if p.suffix == ".csv" else read_jsonl_dataset(p))
    return concat_datasets(parts)


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    for other in parts[1:]:
        if other.columns != first.columns or other.types != first.types:
            raise _TaskFailure(
                "schema",
                f"cannot concatenate datasets with schemas {first.schema} and {other.schema}",
            )
    rows = tuple(row for part in parts for row in part.rows)
    return Dataset(first.columns, first.types, rows)


# ---------------------------------------------------------------------------
# Destinations


def destination_file(dest: dict[str, str], backends: Backends) -> Path:
    """Physical path a destination resolves to under the local stores."""
    kind = dest.get("kind")
    locator = str(dest.get("locator", "") or "")
    name = str(dest.get("name", "") or "dataset")
    root = backends.data_root
    if kind == "object_store_dir":
        bucket = root / "object_store"
        if locator:
            bucket = bucket / locator
        return bucket / name / "part-0000.csv"
    if kind == "table_store":
        return root / "table_store" / (locator or "main") / f"{name}.csv"
    if kind == "local_dir":
        return root / "local" / (locator or "sandbox") / f"{name}.csv"
    raise _TaskFailure("config", f"unknown destination kind: {kind!r}")


def write_destination(d: Dataset, dest: dict[str, str], backends: Backends) -> int:
    path = destination_file(dest, backends)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dataset_to_csv(d), encoding="utf-8", newline="")
    if dest.get("kind") == "table_store":
        sidecar = path.with_suffix(".schema.json")
        sidecar.write_text(
            json.dumps(
                {"columns": [{"name": c, "type": t} for c, t in zip(d.columns, d.types)]},
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )
    return d.row_count


def read_destination(dest: dict[str, str], backends: Backends) -> Dataset:
    path = destination_file(dest, backends)
    if dest.get("kind") == "object_store_dir":
        return _read_data_dir(path.parent)
    if not path.is_file():
        raise _TaskFailure("io", f"destination not materialized: {path}")
    return read_csv_dataset(path)


# ---------------------------------------------------------------------------
# Transforms

_FILTER_OPS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "contains": lambda a, b: str(b) in str(a),
}


def _coerce_literal(value: Any, ctype: str) -> Any:
    if ctype == "int" and not isinstance(value, bool):
        return int(value)
    if ctype == "float" and not isinstance(value, bool):
        return float(value)
    if ctype == "bool":
        if isinstance(value, bool):
            return value
        if value in ("true", "false"):
            return value == "true"
        raise TransformError(f"cannot interpret {value!r} as bool")
    return str(value)


def _transform_select(d: Dataset, params: dict[str, Any]) -> Dataset:
    wanted = params.get("columns")
    if not isinstance(wanted, list) or not wanted:
        raise TransformError("select needs a non-empty 'columns' list")
    idx = [d.column_index(c) for c in wanted]
    return Dataset(
        columns=tuple(wanted),
        types=tuple(d.types[i] for i in idx),
        rows=tuple(tuple(row[i] for i in idx) for row in d.rows),
    )


def _transform_rename(d: Dataset, params: dict[str, Any]) -> Dataset:
    mapping = params.get("mapping")
    if not isinstance(mapping, dict) or not mapping:
        raise TransformError("rename needs a non-empty 'mapping' object")
    for old in mapping:
        d.column_index(old)
    new_columns = tuple(mapping.get(c, c) for c in d.columns)
    if len(set(new_columns)) != len(new_columns):
        raise TransformError(f"rename produces duplicate columns: {new_columns}")
    return Dataset(new_columns, d.types, d.rows)


def _transform_filter(d: Dataset, params: dict[str, Any]) -> Dataset:
    column, op = params.get("column"), params.get("op")
    if op not in _FILTER_OPS:
        raise TransformError(f"unknown filter op: {op!r}")
    i = d.column_index(column)
    literal = _coerce_literal(params.get("value"), d.types[i])
    pred = _FILTER_OPS[op]
    return Dataset(d.columns, d.types, tuple(r for r in d.rows if pred(r[i], literal)))


def _transform_cast(d: Dataset, params: dict[str, Any]) -> Dataset:
    column, target = params.get("column"), params.get("to")
    if target not in COLUMN_TYPES:
        raise TransformError(f"unknown cast target type: {target!r}")
    i = d.column_index(column)
    rows = []
    for r_i, row in enumerate(d.rows):
        cell = row[i]
        rows.append(row[:i] + (_parse_cell(_format_cell(cell, d.types[i]), target, r_i, column),) + row[i + 1 :])
    types = d.types[:i] + (target,) + d.types[i + 1 :]
    return Dataset(d.columns, types, tuple(rows))


def _transform_dedupe(d: Dataset, params: dict[str, Any]) -> Dataset:
    seen: set[tuple] = set()
    rows = []
    for row in d.rows:
        if row not in seen:
            seen.add(row)
            rows.append(row)
    return Dataset(d.columns, d.types, tuple(rows))


def _measure_column(measure: dict[str, Any]) -> str:
    if measure.get("as"):
        return str(measure["as"])
    fn = measure.get("fn")
    return fn if fn == "count" else f"{fn}_{measure.get('col')}"


def _transform_aggregate(d: Dataset, params: dict[str, Any]) -> Dataset:
    group_by = params.get("group_by", [])
    measures = params.get("measures", [{"fn": "count"}])
    if not isinstance(group_by, list) or not isinstance(measures, list) or not measures:
        raise TransformError("aggregate needs 'group_by' list and non-empty 'measures'")
    group_idx = [d.column_index(c) for c in group_by]
    for m in measures:
        if m.get("fn") not in ("count", "sum", "avg"):
            raise TransformError(f"unknown aggregate fn: {m.get('fn')!r}")
        if m["fn"] != "count":
            i = d.column_index(m.get("col"))
            if d.types[i] not in ("int", "float"):
                raise TransformError(f"cannot {m['fn']} non-numeric column {m.get('col')!r}")

    groups: dict[tuple, list[tuple]] = {}
    for row in d.rows:  # first-seen group order keeps output deterministic
        key = tuple(row[i] for i in group_idx)
        groups.setdefault(key, []).append(row)

    columns = tuple(group_by) + tuple(_measure_column(m) for m in measures)
    types = list(d.types[i] for i in group_idx)
    out_rows = []
    measure_types: list[str] = []
    for m in measures:
        if m["fn"] == "count":
            measure_types.append("int")
        elif m["fn"] == "avg":
            measure_types.append("float")
        else:
            measure_types.append(d.types[d.column_index(m["col"])])
    for key, rows in groups.items():
        cells = list(key)
        for m in measures:
            if m["fn"] == "count":
                cells.append(len(rows))
                continue
            i = d.column_index(m["col"])
            total = sum(r[i] for r in rows)
            if m["fn"] == "avg":
                cells.append(total / len(rows))
            else:
                cells.append(float(total) if d.types[i] == "float" else total)
        out_rows.append(tuple(cells))
    return Dataset(columns, tuple(types) + tuple(measure_types), tuple(out_rows))


_TRANSFORMS = {
    "select": _transform_select,
    "rename": _transform_rename,
    "filter": _transform_filter,
    "cast": _transform_cast,
    "dedupe": _transform_dedupe,
    "aggregate": _transform_aggregate,
}


def run_transform(step: Any, data: Dataset) -> Dataset:
    """Apply one closed-DSL transform step (op + params) to a dataset."""
    op = getattr(step, "op", None) or step["op"]
    params = getattr(step, "params", None)
    if params is None:
        params = step.get("params", {})
    if op not in TRANSFORM_OPS:
        raise TransformError(f"op {op!r} is not in the transform DSL")
    return _TRANSFORMS[op](data, dict(params))


def emit_summary(d: Dataset, spec: dict[str, Any]) -> dict[str, Any]:
    """Aggregate a dataset into a CSV table plus a declarative chart spec.

    The chart spec is rendering-free JSON: {"kind": bar|line, "x", "y",
    "data", "title"}; drawing it is the console's job.
    """
    group_by = list(spec.get("group_by", []))
    measures = list(spec.get("measures", [{"fn": "count"}]))
    kind = spec.get("kind", "bar")
    if kind not in ("bar", "line"):
        raise TransformError(f"unknown chart kind: {kind!r}")
    if not d.rows:
        table = Dataset(tuple(group_by) + tuple(_measure_column(m) for m in measures),
                        tuple("string" for _ in group_by) + tuple("int" for _ in measures),
                        ())
    else:
        table = run_transform({"op": "aggregate", "params": {"group_by": group_by, "measures": measures}}, d)
    y_column = _measure_column(measures[0])
    chart = {
        "kind": kind,
        "x": group_by[0] if group_by else None,
        "y": y_column,
        "data": [dict(zip(table.columns, row)) for row in table.rows],
        "title": f"{y_column} by {group_by[0]}" if group_by else y_column,
    }
    return {"table": dataset_to_csv(table), "chart": chart}


# ---------------------------------------------------------------------------
# Execution


def _extract(tool_id: str, source: dict[str, Any], backends: Backends) -> Dataset:
    kind = source.get("kind")
    locator = str(source.get("locator", ""))
    if kind == "local_dir":
        p = Path(locator)
        if p.is_absolute():
            return _read_data_dir(p)
        candidates = [backends.data_root / locator]
        if backends.fixtures_root is not None:
            candidates.append(backends.fixtures_root / locator)
        for directory in candidates:
            if directory.is_dir():
                return _read_data_dir(directory)
        raise _TaskFailure("io", f"missing fixture directory: {candidates[0]}")
    if kind in ("git_fixture", "dataset_fixture"):
        slug = locator.rstrip("/").split("/")[-1].removesuffix(".git") or locator
        return _read_data_dir(backends.fixture_dir(slug))
    if kind == "http_url":
        if not backends.http_enabled or not backends.http_base_url:
            raise _TaskFailure("io", "http extraction is disabled in this runtime")
        import tempfile

        import requests

        url = backends.http_base_url.rstrip("/") + "/" + locator.lstrip("/")
        try:
            resp = requests.get(url, timeout=30)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise _TaskFailure("io", f"http fetch failed: {exc}") from exc
        suffix = ".jsonl" if locator.endswith(".jsonl") else ".csv"
        with tempfile.NamedTemporaryFile("w", suffix=suffix, delete=False, encoding="utf-8") as fh:
            fh.write(resp.text)
            tmp = Path(fh.name)
        try:
            return read_jsonl_dataset(tmp) if suffix == ".jsonl" else read_csv_dataset(tmp)
        finally:
            tmp.unlink(missing_ok=True)
    raise _TaskFailure("config", f"unknown source kind: {kind!r}")


def _transform_op_for_tool(tool: Any) -> tuple[str, dict[str, Any]]:
    if tool.body is not None:
        return str(tool.body.get("op")), dict(tool.body.get("params", {}))
    op = tool.id.removeprefix("transform_")
    return op, {}


def execute(
    p: PipelineSpec,
    backends: Backends,
    verdict: SafetyVerdict,
    catalog: Any,
    max_workers: int = 1,
) -> RunRecord:
    """Run a validated pipeline DAG; refuse anything without a clean verdict.

    Tasks whose dependencies all succeeded are submitted to the pool;
    anything downstream of a failure is skipped, never run.
    """
    if verdict is None or verdict.status not in (VerdictStatus.PASS, VerdictStatus.SANITIZED):
        status = verdict.status.value if verdict else "missing"
        raise ExecutionRefused(f"refusing to execute: safety verdict is {status}")

    started = time.monotonic()
    deps: dict[str, set[str]] = {}
    for tid in p.tasks:
        deps[tid] = {d for d in p.task_dependencies(tid)}
    children: dict[str, set[str]] = {tid: set() for tid in p.tasks}
    for tid, ds in deps.items():
        for d in ds:
            if d in children:
                children[d].add(tid)

    results: dict[str, TaskResult] = {}
    outputs: dict[tuple[str, str], Any] = {}
    audit: AuditResult | None = None

    def resolve_binding(binding: Any) -> Any:
        if isinstance(binding, Literal):
            return binding.value
        if isinstance(binding, OutputRef):
            return outputs[(binding.task, binding.output)]
        return [outputs[(r.task, r.output)] for r in binding]

    def run_task(tid: str) -> tuple[dict[str, Any], int | None, int | None]:
        node = p.tasks[tid]
        comp = p.components.get(node.component)
        if comp is None:
            raise _TaskFailure("config", f"unknown component {node.component!r}")
        tool = catalog.get(comp.tool_ref)
        if tool is None:
            raise _TaskFailure("config", f"unknown tool {comp.tool_ref!r}")
        bound = {name: resolve_binding(b) for name, b in node.bindings.items()}
        role = tool.interface.role

        if role == "extractor":
            ds = _extract(tool.id, bound["source"], backends).with_provenance(tid)
            return {"data": ds}, None, ds.row_count
        if role == "transform":
            data = bound["data"]
            if isinstance(data, list):
                data = concat_datasets(data)
            op, baked = _transform_op_for_tool(tool)
            params = {**baked, **(bound.get("params") or {})}
            try:
                out = run_transform({"op": op, "params": params}, data).with_provenance(tid)
            except TransformError as exc:
                raise _TaskFailure("transform", str(exc)) from exc
            return {"data": out}, data.row_count, out.row_count
        if role == "loader":
            data = bound["data"]
            if isinstance(data, list):
                data = concat_datasets(data)
            count = write_destination(data, bound["dest"], backends)
            return {"rows_loaded": count}, data.row_count, count
        if role == "validator":
            extracted = bound["extracted"]
            if not isinstance(extracted, list):
                extracted = [extracted]
            total = sum(ds.row_count for ds in extracted)
            loaded = int(bound["loaded"])
            allow = bool(bound.get("allow_row_loss", False))
            passed = loaded == total or (allow and loaded <= total)
            return (
                {"audit": AuditResult(rows_extracted=total, rows_loaded=loaded, passed=passed)},
                total,
                loaded,
            )
        raise _TaskFailure("config", f"unknown tool role: {role!r}")

    waiting = set(p.tasks)
    scheduled: set[str] = set()

    def ready_tasks() -> list[str]:
        out = []
        for tid in sorted(waiting - scheduled):
            ds = deps[tid]
            if any(d not in p.tasks for d in ds):
                continue  # dangling deps never become ready; reported as skipped
            if all(d in results and results[d].status == "succeeded" for d in ds):
                out.append(tid)
        return out

    def mark_skipped(tid: str, why: str) -> None:
        results[tid] = TaskResult("skipped", reason=why)
        waiting.discard(tid)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = {}
        while waiting or futures:
            # tasks with failed/skipped ancestors are settled without running
            for tid in sorted(waiting - scheduled):
                ds = deps[tid]
                if any(d not in p.tasks for d in ds):
                    mark_skipped(tid, "unresolved dependency")
                elif any(
                    results.get(d) is not None and results[d].status != "succeeded" for d in ds
                ):
                    mark_skipped(tid, "upstream failure")
            for tid in ready_tasks():
                scheduled.add(tid)
                futures[pool.submit(run_task, tid)] = tid
            if not futures:
                if waiting - scheduled:
                    # nothing runnable and nothing in flight: remaining tasks
                    # form a cycle; settle them as skipped
                    for tid in sorted(waiting - scheduled):
                        mark_skipped(tid, "dependency cycle")
                break
            done, _ = wait(futures, return_when=FIRST_COMPLETED)
            for fut in done:
                tid = futures.pop(fut)
                waiting.discard(tid)
                try:
                    outs, rows_in, rows_out = fut.result()
                except _TaskFailure as exc:
                    results[tid] = TaskResult("failed", reason=f"{exc.reason}: {exc}")
                except Exception as exc:  # defensive: never hang the DAG
                    results[tid] = TaskResult("failed", reason=f"internal: {exc}")
                else:
                    for name, value in outs.items():
                        outputs[(tid, name)] = value
                        if isinstance(value, AuditResult):
                            audit = value
                    results[tid] = TaskResult("succeeded", rows_in=rows_in, rows_out=rows_out)

    succeeded = all(r.status == "succeeded" for r in results.values()) and (
        audit.passed if audit else True
    )
    return RunRecord(
        pipeline=p.name,
        tasks=results,
        audit=audit,
        wall_time_s=time.monotonic() - started,
        succeeded=succeeded,
    )
