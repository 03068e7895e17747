"""Command-line entry points: chat, compile, validate, run, eval, serve.

Every command exits 0 on success and prints a machine-readable error JSON on
stderr otherwise; `validate` exits 3 for a rejected pipeline so shell scripts
can gate on the verdict.
"""

from __future__ import annotations

import argparse
import json
import sys
import uuid
from pathlib import Path
from typing import Any

from .compiler import parse as parse_pipeline, pipeline_id, serialize, validate_compile
from .config import (
    AppConfig,
    default_catalog,
    default_examples,
    engine_config,
    load_config,
    make_provider,
)
from .engine import Engine, Phase
from .evalsuite import run_elt_suite
from .executor import Backends, execute
from .intent import TaskSpec
from .metrics import variance_report
from .safety import VerdictStatus, scan
from .service import create_app

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 3


class CliError(RuntimeError):
    pass


def _fail(kind: str, message: str, code: int = EXIT_ERROR) -> int:
    print(json.dumps({"error": {"type": kind, "message": message}}), file=sys.stderr)
    return code


def _backends(cfg: AppConfig) -> Backends:
    return Backends(data_root=Path(cfg.data_root), fixtures_root=Path(cfg.fixtures_root))


def cmd_chat(args: argparse.Namespace, cfg: AppConfig) -> int:
    catalog = default_catalog()
    engine = Engine(catalog, default_examples(), engine_config(cfg))
    session = uuid.uuid4().hex[:12]
    provider = make_provider(cfg, session=session)
    try:
        prompt = input("you> ").strip()
    except EOFError:
        return EXIT_OK
    state = engine.start(prompt, provider, session=session)
    while not state.terminal:
        state = engine.run_until_blocked(state, provider)
        if state.phase is Phase.QUESTION:
            print(f"assistant> {state.transcript.turns[-1].text}")
            try:
                answer = input("you> ").strip()
            except EOFError:
                return _fail("chat", "input closed mid-dialogue")
            state = engine.step(state, provider, user_input=answer)
    if state.phase is Phase.DONE and state.pipeline is not None:
        out = Path(cfg.artifacts_root) / "pipelines" / session
        out.mkdir(parents=True, exist_ok=True)
        pid = pipeline_id(state.pipeline)
        path = out / f"{pid}.yaml"
        path.write_text(serialize(state.pipeline), encoding="utf-8")
        if state.verdict:
            path.with_name(f"{pid}.verdict.json").write_text(
                json.dumps(state.verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
            )
        print(f"assistant> pipeline ready: {path}")
        return EXIT_OK
    return _fail("chat", f"session failed: {state.failure}")


def cmd_compile(args: argparse.Namespace, cfg: AppConfig) -> int:
    payload = json.loads(Path(args.taskspec).read_text(encoding="utf-8"))
    spec = TaskSpec.from_dict(payload)
    catalog = default_catalog()
    from .compiler import build

    pipeline = build(spec, list(catalog))
    report = validate_compile(pipeline, catalog)
    text = serialize(pipeline)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{pipeline_id(pipeline)}.yaml"
        path.write_text(text, encoding="utf-8")
        print(json.dumps({"pipeline": str(path), "compile": report.to_dict()}, indent=2))
    else:
        print(text)
    return EXIT_OK if report.pipeline_ok else EXIT_ERROR


def cmd_validate(args: argparse.Namespace, cfg: AppConfig) -> int:
    path = Path(args.pipeline)
    pipeline = parse_pipeline(path.read_text(encoding="utf-8"))
    catalog = default_catalog()
    verdict = scan(pipeline, catalog)
    sidecar = path.with_name(f"{path.stem}.verdict.json")
    sidecar.write_text(json.dumps(verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    print(json.dumps(verdict.to_dict(), indent=2, sort_keys=True))
    return EXIT_REJECTED if verdict.status is VerdictStatus.REJECTED else EXIT_OK


def cmd_run(args: argparse.Namespace, cfg: AppConfig) -> int:
    path = Path(args.pipeline)
    pipeline = parse_pipeline(path.read_text(encoding="utf-8"))
    catalog = default_catalog()
    sidecar = path.with_name(f"{path.stem}.verdict.json")
    if sidecar.exists():
        from .safety import SafetyVerdict

        verdict = SafetyVerdict.from_dict(json.loads(sidecar.read_text(encoding="utf-8")))
    else:
        verdict = scan(pipeline, catalog)
    if verdict.status is VerdictStatus.REJECTED:
        print(json.dumps(verdict.to_dict(), indent=2, sort_keys=True))
        return _fail("rejected", "pipeline is rejected; refusing to run", EXIT_REJECTED)
    if verdict.status is VerdictStatus.SANITIZED and verdict.sanitized_pipeline:
        pipeline = verdict.sanitized_pipeline
    record = execute(pipeline, _backends(cfg), verdict, catalog, max_workers=args.workers)
    print(json.dumps(record.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK if record.succeeded else EXIT_ERROR


def cmd_eval_variance(args: argparse.Namespace, cfg: AppConfig) -> int:
    catalog = default_catalog()
    examples = default_examples()
    texts = []
    for _ in range(args.n):
        provider = make_provider(cfg, session="variance")
        engine = Engine(catalog, examples, engine_config(cfg))
        state = engine.start(args.prompt, provider, session="variance")
        if not state.terminal:
            state = engine.run_until_blocked(state, provider)
        if state.phase is Phase.QUESTION:
            return _fail("variance", "prompt is under-specified for unattended generation")
        if state.phase is not Phase.DONE or state.pipeline is None:
            return _fail("variance", f"generation failed: {state.failure}")
        texts.append(serialize(state.pipeline))
    report = variance_report(texts)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_eval_elt(args: argparse.Namespace, cfg: AppConfig) -> int:
    mode = "no_question" if args.no_question else "full"
    workdir = Path(cfg.artifacts_root) / "eval"
    report = run_elt_suite(Path(args.suite), mode, workdir, default_catalog(), default_examples())
    print(report.format_table())
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, cfg: AppConfig) -> int:
    import uvicorn

    uvicorn.run(create_app(cfg), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eltforge", description=__doc__)
    parser.add_argument("--config", default=None, help="path to a TOML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("chat", help="interactive dialogue driving one session")

    p = sub.add_parser("compile", help="compile a task spec JSON into pipeline IR")
    p.add_argument("taskspec")
    p.add_argument("--out", default=None, help="directory to write the IR into")

    p = sub.add_parser("validate", help="safety-scan a pipeline IR file")
    p.add_argument("pipeline")

    p = sub.add_parser("run", help="execute a pipeline IR file locally")
    p.add_argument("pipeline")
    p.add_argument("--workers", type=int, default=1)

    p_eval = sub.add_parser("eval", help="evaluation harness")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p = eval_sub.add_parser("variance", help="repeat one prompt and report generation variance")
    p.add_argument("--prompt", required=True)
    p.add_argument("--n", type=int, default=20)
    p = eval_sub.add_parser("elt", help="run a desk-suite directory")
    p.add_argument("--suite", required=True)
    p.add_argument("--no-question", action="store_true")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8736)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except Exception as exc:
        return _fail("config", str(exc))
    handlers = {
        "chat": cmd_chat,
        "compile": cmd_compile,
        "validate": cmd_validate,
        "run": cmd_run,
        "serve": cmd_serve,
    }
    try:
        if args.command == "eval":
            handler = cmd_eval_variance if args.eval_command == "variance" else cmd_eval_elt
            return handler(args, cfg)
        return handlers[args.command](args, cfg)
    except KeyboardInterrupt:
        return _fail("interrupted", "cancelled")
    except Exception as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
