"""Run configuration: compiler flags, repair budgets, timeouts, model
settings and platform include lists, loadable from TOML or JSON."""

from __future__ import annotations

import dataclasses
import json

try:
    import tomllib
except ModuleNotFoundError:          # 3.10: stdlib tomllib arrived in 3.11
    try:
        import tomli as tomllib
    except ModuleNotFoundError:
        tomllib = None
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class CompilerConfig:
    cc: str = "g++"
    base_flags: tuple = ("-shared", "-fPIC", "-g")
    # substitutes are debugging artifacts: an unoptimized line table keeps
    # every pseudocode statement individually breakpointable
    optimize: str = "-O0"
    include_dirs: tuple = ()
    extra_flags: tuple = ()
    platform_includes: tuple = ()    # libc headers pulled into the unified header
    timeout: float = 60.0


@dataclass
class BudgetConfig:
    compile_iters_max: int = 5
    runtime_iters_max: int = 3


@dataclass
class TraceConfig:
    per_test_timeout: float = 120.0
    hit_cap: int = 10_000
    alignment_threshold: float = 0.8
    gdb: str = "gdb"


@dataclass
class ModelConfig:
    enabled: bool = False
    base_url: str = ""
    api_key_env: str = "RESUB_API_KEY"
    model: str = ""
    temperature: float = 0.2
    top_p: float = 0.95
    max_tokens: int = 8192


@dataclass
class HarnessConfig:
    per_test_timeout: float = 120.0
    passthrough_env: tuple = ("PATH", "HOME", "LANG")
    sanitizer_runtime: str = ""      # path to the sanitizer shared runtime


@dataclass
class Config:
    compiler: CompilerConfig = field(default_factory=CompilerConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)


def _coerce(cls, doc: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in fields:
            raise KeyError(f"unknown config key {cls.__name__}.{key}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> Config:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
    else:
        if tomllib is None:
            raise RuntimeError(
                "TOML config needs Python >= 3.11 or the tomli package; "
                "use a .json config instead")
        doc = tomllib.loads(path.read_text())
    sections = {f.name: f.default_factory for f in dataclasses.fields(Config)}
    kwargs = {}
    for name, factory in sections.items():
        sub = doc.get(name)
        kwargs[name] = _coerce(type(factory()), sub) if sub else factory()
    unknown = set(doc) - set(sections)
    if unknown:
        raise KeyError(f"unknown config sections: {sorted(unknown)}")
    return Config(**kwargs)
