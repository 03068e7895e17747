"""Runtime configuration: a small TOML file plus one credential env var."""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

from .engine import Engine, EngineConfig, ExampleStore
from .providers import HttpProvider, ReplayProvider, ScriptedProvider
from .safety import RuleSet, default_ruleset
from .tools import Catalog


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    provider: str = "scripted"  # scripted | replay | http
    provider_endpoint: str = ""
    provider_model: str = ""
    credential_env: str = "ELTFORGE_API_KEY"
    scripted_fixture: str = ""
    question_budget: int = 5
    distill_budget: int = 4096
    synthesis_threshold: float = 0.35
    retrieval_k: int = 5
    data_root: str = "./data"
    artifacts_root: str = "./artifacts"
    fixtures_root: str = "./fixtures"


def load_config(path: Path | str | None) -> AppConfig:
    if path is None:
        return AppConfig()
    doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    known = {f.name for f in fields(AppConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return AppConfig(**doc)


def engine_config(cfg: AppConfig) -> EngineConfig:
    return EngineConfig(
        question_budget=cfg.question_budget,
        distill_budget=cfg.distill_budget,
        synthesis_threshold=cfg.synthesis_threshold,
        retrieval_k=cfg.retrieval_k,
    )


def default_catalog(overlay_path: Path | None = None) -> Catalog:
    with resources.as_file(resources.files("eltforge").joinpath("data/tools.yaml")) as p:
        return Catalog.load(p, overlay_path)


def default_examples() -> ExampleStore:
    with resources.as_file(resources.files("eltforge").joinpath("data/examples")) as p:
        return ExampleStore.load(p)


def make_provider(cfg: AppConfig, session: str = "default") -> Any:
    if cfg.provider == "scripted":
        if not cfg.scripted_fixture:
            raise ConfigError("scripted provider needs scripted_fixture in the config")
        fixture_path = Path(cfg.scripted_fixture)
        try:
            return ScriptedProvider(fixture_path, session=session)
        except Exception:
            # fixtures without per-session sequences fall back to the flat list
            return ScriptedProvider(fixture_path, session="default")
    if cfg.provider == "replay":
        if not cfg.scripted_fixture:
            raise ConfigError("replay provider needs scripted_fixture in the config")
        return ReplayProvider(Path(cfg.scripted_fixture))
    if cfg.provider == "http":
        if not cfg.provider_endpoint:
            raise ConfigError("http provider needs provider_endpoint in the config")
        return HttpProvider(
            base_url=cfg.provider_endpoint,
            model=cfg.provider_model or "default",
            credential_env=cfg.credential_env,
        )
    raise ConfigError(f"unknown provider kind: {cfg.provider!r}")
