#!/usr/bin/env python3
"""Generate N pipelines per prompt with the scripted provider and report variance.

With a deterministic provider every generation is byte-identical, which pins
the degenerate corner of the metrics (avg similarity 1.0, variance 0, one
unique version, Gini 0). Pass --perturb to rotate through several scripted
variants of the same task and exercise the non-degenerate paths.
"""

from __future__ import annotations

import argparse
import json

from eltforge.compiler import serialize
from eltforge.engine import Engine, Phase
from eltforge.config import default_catalog, default_examples
from eltforge.metrics import format_variance_table, variance_report
from eltforge.providers import ScriptedProvider


def scripted_parse(name: str, transform_value: int) -> list[str]:
    return [
        json.dumps(
            {
                "assignments": [
                    {"slot": "sources", "value": [{"kind": "local_dir", "locator": "events"}]},
                    {"slot": "destination", "value": {"kind": "table_store", "locator": "main", "name": name}},
                    {
                        "slot": "transforms",
                        "value": [
                            {"op": "filter", "params": {"column": "id", "op": ">", "value": transform_value}}
                        ],
                    },
                ]
            }
        )
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20)
    parser.add_argument("--perturb", type=int, default=1, help="number of scripted variants to cycle")
    args = parser.parse_args()

    catalog = default_catalog()
    examples = default_examples()

    texts = []
    for i in range(args.n):
        variant = i % max(1, args.perturb)
        provider = ScriptedProvider(scripted_parse("events", variant))
        engine = Engine(catalog, examples)
        state = engine.start("load the events", provider, session="variance")
        state = engine.run_until_blocked(state, provider)
        if state.phase is not Phase.DONE:
            raise SystemExit(f"generation {i} failed: {state.failure}")
        texts.append(serialize(state.pipeline))

    report = variance_report(texts)
    print(format_variance_table([(f"scripted x{args.n} (perturb={args.perturb})", report)]))
    print()
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
