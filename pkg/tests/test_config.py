"""Configuration loading and defaults."""

import json

import pytest

from resub.config import Config, load_config


def test_defaults_carry_the_stated_constants():
    cfg = Config()
    assert cfg.budget.compile_iters_max == 5
    assert cfg.budget.runtime_iters_max == 3
    assert cfg.harness.per_test_timeout == 120.0
    assert cfg.model.temperature == 0.2
    assert cfg.model.top_p == 0.95
    assert cfg.model.max_tokens == 8192
    assert cfg.trace.alignment_threshold == 0.8
    assert cfg.model.enabled is False


def test_load_json_config(tmp_path):
    doc = {"compiler": {"cc": "clang++", "include_dirs": ["/x"]},
           "budget": {"compile_iters_max": 2}}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    cfg = load_config(p)
    assert cfg.compiler.cc == "clang++"
    assert cfg.compiler.include_dirs == ("/x",)
    assert cfg.budget.compile_iters_max == 2
    assert cfg.budget.runtime_iters_max == 3       # untouched default


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"budget": {"typo_key": 1}}))
    with pytest.raises(KeyError):
        load_config(p)
    p.write_text(json.dumps({"not_a_section": {}}))
    with pytest.raises(KeyError):
        load_config(p)


def test_toml_config(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('[compiler]\ncc = "g++-12"\n')
    try:
        import tomli  # noqa: F401
        have_toml = True
    except ModuleNotFoundError:
        import sys
        have_toml = sys.version_info >= (3, 11)
    if have_toml:
        assert load_config(p).compiler.cc == "g++-12"
    else:
        with pytest.raises(RuntimeError):
            load_config(p)
