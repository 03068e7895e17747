from __future__ import annotations

import json
from pathlib import Path

import pytest

from eltforge.config import default_catalog, default_examples
from eltforge.executor import Backends
from eltforge.intent import (
    DestinationRef,
    SlotStatus,
    SourceRef,
    TaskSpec,
    TransformStep,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
DESK_SUITE = REPO_ROOT / "suites" / "desk"


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def examples():
    return default_examples()


@pytest.fixture()
def backends(tmp_path) -> Backends:
    return Backends(data_root=tmp_path)


def make_spec(
    sources=(("local_dir", "orders"),),
    destination=("table_store", "main", "orders"),
    transforms=(),
    transforms_none=None,
) -> TaskSpec:
    """Assemble a sufficient TaskSpec without going through the dialogue."""
    spec = TaskSpec()
    spec.sources = [SourceRef(kind=k, locator=loc) for k, loc in sources]
    spec.slot_status["sources"] = SlotStatus.FILLED
    spec.destination = DestinationRef(*destination)
    spec.slot_status["destination"] = SlotStatus.FILLED
    spec.transforms = [TransformStep(op, dict(params)) for op, params in transforms]
    if transforms_none is None:
        transforms_none = not transforms
    spec.slot_status["transforms"] = (
        SlotStatus.EXPLICIT_NONE if transforms_none else SlotStatus.FILLED
    )
    return spec


def write_orders_fixture(data_root: Path, rows: int = 3) -> Path:
    fx = data_root / "orders"
    fx.mkdir(parents=True, exist_ok=True)
    lines = ["id,amount"] + [f"{i},{i * 10}" for i in range(1, rows + 1)]
    (fx / "orders.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return fx


def parse_payload(*assignments) -> dict:
    return {"assignments": list(assignments)}


def scripted(*payloads) -> list[str]:
    return [p if isinstance(p, str) else json.dumps(p) for p in payloads]
