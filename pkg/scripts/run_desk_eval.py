#!/usr/bin/env python3
"""Run the bundled desk suite in both modes and print the success-rate tables.

The interesting comparison is full mode (clarifying questions on) against
no-question mode (budget zero): the under-specified tasks only pass when the
loop is allowed to ask.
"""

from __future__ import annotations

import argparse
import json
import tempfile
from pathlib import Path

from eltforge.config import default_catalog, default_examples
from eltforge.evalsuite import run_elt_suite

REPO_ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--suite", default=str(REPO_ROOT / "suites" / "desk"))
    parser.add_argument("--json", action="store_true", help="emit reports as JSON too")
    args = parser.parse_args()

    catalog = default_catalog()
    examples = default_examples()
    workdir = Path(tempfile.mkdtemp(prefix="desk-eval-"))

    reports = {}
    for mode in ("full", "no_question"):
        report = run_elt_suite(Path(args.suite), mode, workdir, catalog, examples)
        reports[mode] = report
        print(f"== mode: {mode}")
        print(report.format_table())
        print()

    delta = reports["full"].srdel - reports["no_question"].srdel
    print(f"Clarification benefit: +{delta:.1f} points of extraction/loading success")
    if args.json:
        print(json.dumps({m: r.to_dict() for m, r in reports.items()}, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
