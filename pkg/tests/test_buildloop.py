"""Compilation, diagnostic parsing (real g++ output as oracle), patch-block
parsing/application, and the bounded compile-repair loop."""

import textwrap

import pytest

from resub.buildloop import (CompileOptions, DiagKind, PatchBlock,
                             RepairBudget, ScriptedOracle, apply_patch,
                             build_compile_prompt, compile_unit,
                             fill_template, parse_diagnostics,
                             parse_patch_blocks, prompt_fingerprint,
                             repair_compile)
from resub.errors import (BudgetExhausted, CompilerNotFound, NoBlocksFound,
                          SearchNotFound)

from support import requires_binutils


def test_compile_options_argv():
    opts = CompileOptions(sanitize=True, include_dirs=("/inc",),
                          extra_flags=("-Wall",))
    argv = opts.argv("u.cpp", "u.so")
    assert argv[0] == "g++"
    assert "-fsanitize=address" in argv
    assert "-I/inc" in argv and "-Wall" in argv
    assert argv[-3:] == ["-o", "u.so", "u.cpp"]
    assert "-fsanitize=address" not in CompileOptions().argv("u.cpp", "u.so")


@requires_binutils
def test_compile_unit_success(tmp_path):
    unit = tmp_path / "ok.unit.cpp"
    unit.write_text('extern "C" int fn(int x) { return 2 * x; }\n')
    result = compile_unit(unit)
    assert result.ok and result.module_path.exists()
    assert result.module_path.suffix == ".so"


@requires_binutils
def test_compile_unit_failure_diagnostics(tmp_path):
    unit = tmp_path / "broken.unit.cpp"
    unit.write_text("int fn(int x) {\n  return x +\n}\n")
    result = compile_unit(unit)
    assert not result.ok and result.module_path is None
    errs = [d for d in result.diagnostics if d.kind is DiagKind.Error]
    assert errs and errs[0].file == str(unit)
    assert errs[0].line in (2, 3)
    assert errs[0].span_text.strip() in ("return x +", "}")


def test_compiler_not_found(tmp_path):
    unit = tmp_path / "u.cpp"
    unit.write_text("int x;\n")
    with pytest.raises(CompilerNotFound):
        compile_unit(unit, CompileOptions(cc="definitely-no-such-cc"))


def test_parse_diagnostics_note_folding():
    raw = textwrap.dedent("""\
        u.cpp:4:10: error: 'foo' was not declared in this scope
        u.cpp:4:10: note: suggested alternative: 'for'
            4 |   return foo;
              |          ^~~
        u.cpp:9:1: warning: unused variable 'z'
    """)
    recs = parse_diagnostics(raw, sources={"u.cpp": "\n" * 10})
    assert len(recs) == 2
    assert recs[0].kind is DiagKind.Error
    assert "suggested alternative" in recs[0].message
    assert recs[1].kind is DiagKind.Warning and recs[1].line == 9


def test_parse_diagnostics_trailer_collects_unparsed():
    trailer = []
    recs = parse_diagnostics("collect2: error stub\nld returned 1\n",
                             trailer=trailer)
    assert recs == []
    assert trailer == ["collect2: error stub", "ld returned 1"]


# --- patch blocks ------------------------------------------------------------

RESPONSE_TWO_BLOCKS = """\
The loop bound is off by one and the accumulator starts wrong.

fn_x.unit.cpp
```c
<<<<<<< SEARCH
  for ( i = 0; i <= n; ++i )
=======
  for ( i = 0; i < n; ++i )
>>>>>>> REPLACE
```

fn_x.unit.cpp
```c
<<<<<<< SEARCH
  acc = 1;
=======
  acc = 0;
>>>>>>> REPLACE
```
"""


def test_parse_patch_blocks_multi():
    blocks = parse_patch_blocks(RESPONSE_TWO_BLOCKS)
    assert [b.file for b in blocks] == ["fn_x.unit.cpp", "fn_x.unit.cpp"]
    assert blocks[0].search_text == "  for ( i = 0; i <= n; ++i )"
    assert blocks[1].replace_text == "  acc = 0;"


def test_parse_patch_blocks_path_above_fence():
    resp = "path/to/u.cpp\n```c\n<<<<<<< SEARCH\na\n=======\nb\n>>>>>>> REPLACE\n```\n"
    (block,) = parse_patch_blocks(resp)
    assert block.file == "path/to/u.cpp"


def test_parse_patch_blocks_skips_malformed():
    resp = ("u.cpp\n<<<<<<< SEARCH\nunterminated\n=======\n"
            + RESPONSE_TWO_BLOCKS)
    blocks = parse_patch_blocks(resp)
    assert len(blocks) == 2          # the dangling block is dropped


def test_parse_patch_blocks_empty_search_rejected():
    resp = "u.cpp\n<<<<<<< SEARCH\n=======\nnew\n>>>>>>> REPLACE\n"
    with pytest.raises(NoBlocksFound):
        parse_patch_blocks(resp)


def test_parse_patch_blocks_none():
    with pytest.raises(NoBlocksFound):
        parse_patch_blocks("I cannot fix this, sorry.")


def test_apply_patch_first_occurrence_only():
    text = "a = 1;\nb = 1;\na = 1;\n"
    out = apply_patch(text, PatchBlock("u", "a = 1;", "a = 2;"))
    assert out == "a = 2;\nb = 1;\na = 1;\n"


def test_apply_patch_exact_match_required():
    with pytest.raises(SearchNotFound):
        apply_patch("a=1;\n", PatchBlock("u", "a = 1;", "a = 2;"))


def test_fill_template_leaves_stray_braces():
    t = "file {file_path}: code { x = {0}; }"
    assert fill_template(t, file_path="u.cpp") == \
        "file u.cpp: code { x = {0}; }"


# --- scripted client ---------------------------------------------------------

def test_scripted_oracle_fingerprint_then_substring():
    prompt = "please fix fn_sum( in this unit"
    oracle = ScriptedOracle({
        prompt_fingerprint(prompt): "exact",
        "fn_sum(": "by-substring",
    })
    assert oracle.generate(prompt) == "exact"
    assert oracle.generate("other prompt with fn_sum( inside") == "by-substring"
    assert oracle.generate("nothing matches") == ""
    assert len(oracle.calls) == 3


def test_scripted_oracle_key_order_deterministic():
    oracle = ScriptedOracle({"zz": "late", "aa": "early"})
    assert oracle.generate("aa zz") == "early"


# --- the loop ----------------------------------------------------------------

BROKEN_UNIT = """\
extern "C" int fn_demo(int x) {
  int acc = seed_value;
  return acc + x;
}
"""

DECL_FIX = """\
fn_demo.unit.cpp
```c
<<<<<<< SEARCH
extern "C" int fn_demo(int x) {
=======
static const int seed_value = 40;
extern "C" int fn_demo(int x) {
>>>>>>> REPLACE
```
"""


@requires_binutils
def test_repair_compile_fixes_unit(tmp_path):
    unit = tmp_path / "fn_demo.unit.cpp"
    unit.write_text(BROKEN_UNIT)
    client = ScriptedOracle({"fn_demo": DECL_FIX})
    outcome = repair_compile(unit, client, RepairBudget(), CompileOptions())
    assert outcome.ok and outcome.module_path.exists()
    assert len(outcome.iterations) == 1
    assert outcome.iterations[0].touched_prototypes  # edit above the body


@requires_binutils
def test_repair_compile_passthrough_when_already_ok(tmp_path):
    unit = tmp_path / "u.unit.cpp"
    unit.write_text("int fn(void) { return 1; }\n")
    outcome = repair_compile(unit, ScriptedOracle({}), RepairBudget(),
                             CompileOptions())
    assert outcome.ok and outcome.iterations == []


@requires_binutils
def test_repair_compile_budget_exhausted(tmp_path):
    unit = tmp_path / "u.unit.cpp"
    unit.write_text("int fn(void) { return undefined_thing; }\n")
    with pytest.raises(BudgetExhausted) as exc:
        repair_compile(unit, ScriptedOracle({}),
                       RepairBudget(compile_iters_max=2), CompileOptions())
    failed = exc.value.args[0]
    assert not failed.ok and len(failed.iterations) == 2


@requires_binutils
def test_repair_compile_rejects_foreign_file_patches(tmp_path):
    unit = tmp_path / "fn_demo.unit.cpp"
    unit.write_text(BROKEN_UNIT)
    foreign = DECL_FIX.replace("fn_demo.unit.cpp", "unified.h")
    client = ScriptedOracle({"fn_demo": foreign})
    with pytest.raises(BudgetExhausted):
        repair_compile(unit, client, RepairBudget(compile_iters_max=1),
                       CompileOptions())
    assert unit.read_text() == BROKEN_UNIT


@requires_binutils
def test_compile_prompt_carries_diagnostics_and_window(tmp_path):
    unit = tmp_path / "fn_demo.unit.cpp"
    unit.write_text(BROKEN_UNIT)
    result = compile_unit(unit)
    prompt = build_compile_prompt(unit, BROKEN_UNIT, result.diagnostics,
                                  result.raw_output)
    assert "seed_value" in prompt
    assert str(unit) in prompt
    assert "<<<<<<< SEARCH" in prompt       # the patch-format rules
    assert "2->" in prompt                  # numbered source window
