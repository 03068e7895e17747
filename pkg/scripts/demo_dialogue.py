#!/usr/bin/env python3
"""Replay the bundled rename dialogue end to end, printing each turn.

Shows the whole path: clarifying questions, the mid-dialogue destination
rename (latest statement wins), pipeline compilation, the safety verdict,
and a local execution against a throwaway fixture.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from eltforge.compiler import pipeline_id, serialize
from eltforge.config import default_catalog, default_examples
from eltforge.engine import Engine, Phase
from eltforge.executor import Backends, execute
from eltforge.providers import ScriptedProvider

RESPONSES = [
    json.dumps(
        {
            "assignments": [
                {"slot": "sources", "value": [{"kind": "local_dir", "locator": "repo-data"}]}
            ]
        }
    ),
    json.dumps({"slot": "destination", "question": "Where should the repository data be stored?"}),
    json.dumps(
        {
            "assignments": [
                {"slot": "destination", "value": {"kind": "object_store_dir", "name": "cve-bench-new"}}
            ]
        }
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

ANSWERS = [
    "s3 name it cve-bench-new",
    "None, actually change the name of the s3 to elt-bench-new",
]


def main() -> int:
    root = Path(tempfile.mkdtemp(prefix="dialogue-demo-"))
    fixture = root / "repo-data"
    fixture.mkdir()
    (fixture / "files.csv").write_text("path,size\nREADME.md,120\nsrc/main.py,800\n")

    catalog = default_catalog()
    provider = ScriptedProvider(RESPONSES)
    engine = Engine(catalog, default_examples())

    state = engine.start("archive the repository data", provider, session="demo")
    print("user> archive the repository data")
    answers = iter(ANSWERS)
    while not state.terminal:
        state = engine.run_until_blocked(state, provider)
        if state.phase is Phase.QUESTION:
            print(f"assistant> {state.transcript.turns[-1].text}")
            answer = next(answers)
            print(f"user> {answer}")
            state = engine.step(state, provider, user_input=answer)

    assert state.phase is Phase.DONE, state.failure
    print(f"assistant> {state.last_observation}")
    print()
    print(f"final destination: {state.spec.destination}")
    print(f"pipeline {pipeline_id(state.pipeline)} | verdict {state.verdict.status.value}")
    print()
    record = execute(state.pipeline, Backends(data_root=root), state.verdict, catalog, max_workers=2)
    print(json.dumps(record.to_dict(), indent=2, sort_keys=True))
    print()
    print(serialize(state.pipeline))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
