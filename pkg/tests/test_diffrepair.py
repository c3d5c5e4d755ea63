"""Delta classification over aligned hit streams, sanitizer report parsing
(with a real AddressSanitizer run as the oracle), and the runtime repair
loop's rollback discipline."""

import subprocess
import textwrap

import pytest

from resub.buildloop import CompileOptions, RepairBudget
from resub.diffrepair import (DeltaKind, RuntimeEvaluation, SanReport,
                              build_delta, delta_to_json, diff_traces,
                              pair_calls, parse_san_report, render_delta,
                              render_san_report, repair_runtime)
from resub.errors import BudgetExhausted, UnresolvableFrame
from resub.tracekit import (BinaryRole, ExecutionTrace, SignalEntry, TraceHit,
                            call_hash)

from support import requires_binutils


def hit(bp, values=None, inv=1, test="t"):
    return TraceHit(test, call_hash(test, inv), bp, inv, 1, values or {})


def trace(role, hits, signals=()):
    return ExecutionTrace(binary_role=role, hits=list(hits),
                          signals=list(signals))


def one_pair(a_hits, b_hits):
    pairs, a_only, b_only = pair_calls(
        trace(BinaryRole.OriginalA, a_hits),
        trace(BinaryRole.SubstitutedB, b_hits))
    assert not a_only and not b_only
    (pair,) = pairs
    return pair


class TestDiffTraces:
    def test_identical_streams_collapse_to_allsame(self):
        hits = [hit("L5", {"v": "1"}), hit("L6", {"v": "2"}), hit("L7")]
        blocks = diff_traces(one_pair(hits, list(hits)))
        assert [b.kind for b in blocks] == [DeltaKind.AllSame]
        assert len(blocks[0].entries) == 3

    def test_value_divergence_is_diffvars(self):
        a = [hit("L5", {"v": "1"}), hit("L6", {"v": "2"})]
        b = [hit("L5", {"v": "1"}), hit("L6", {"v": "99"})]
        blocks = diff_traces(one_pair(a, b))
        assert [b.kind for b in blocks] == [DeltaKind.AllSame,
                                            DeltaKind.DiffVars]
        assert blocks[1].anchor == "L5"
        assert blocks[1].entries[0].bp_id == "L6"

    def test_missing_hits_are_onlya(self):
        a = [hit("L5"), hit("L6"), hit("L7")]
        b = [hit("L5"), hit("L7")]
        blocks = diff_traces(one_pair(a, b))
        kinds = [b.kind for b in blocks]
        assert kinds == [DeltaKind.AllSame, DeltaKind.OnlyA, DeltaKind.AllSame]
        assert blocks[1].anchor == "L5"

    def test_extra_hits_are_onlyb(self):
        a = [hit("L5")]
        b = [hit("L5"), hit("L6"), hit("L6")]
        blocks = diff_traces(one_pair(a, b))
        assert [b.kind for b in blocks] == [DeltaKind.AllSame, DeltaKind.OnlyB]
        assert len(blocks[1].entries) == 2


def test_pair_calls_by_invocation_and_depth():
    a = [hit("L5", inv=1), hit("L5", inv=2)]
    b = [hit("L5", inv=1)]
    pairs, a_only, b_only = pair_calls(
        trace(BinaryRole.OriginalA, a), trace(BinaryRole.SubstitutedB, b))
    assert len(pairs) == 1 and pairs[0].invocation_index == 1
    assert a_only == [("t", 2, 1)] and not b_only


def test_build_delta_first_divergence_and_signal_priority():
    a = trace(BinaryRole.OriginalA, [hit("L5", {"v": "1"})])
    b = trace(BinaryRole.SubstitutedB, [hit("L5", {"v": "1"})],
              signals=[SignalEntry("SIGSEGV", "L5", ("f (u.cpp:9)",))])
    delta = build_delta("fn", a, b)
    assert not delta.empty
    assert delta.first_divergence == ("Signal", "L5")
    rendered = render_delta(delta, {})
    assert "SIGSEGV" in rendered and "u.cpp:9" in rendered


def test_build_delta_empty_on_equal_traces():
    hits = [hit("L5", {"v": "1"}), hit("L6")]
    delta = build_delta("fn", trace(BinaryRole.OriginalA, hits),
                        trace(BinaryRole.SubstitutedB, list(hits)))
    assert delta.empty
    assert render_delta(delta, {}) == "no divergence"


def test_render_elides_long_same_runs():
    a = [hit("L5", {"v": str(i)}, inv=1) for i in range(30)]
    b = [hit("L5", {"v": str(i if i != 29 else 99)}, inv=1) for i in range(30)]
    delta = build_delta("fn", trace(BinaryRole.OriginalA, a),
                        trace(BinaryRole.SubstitutedB, b))
    rendered = render_delta(delta, {"L5": "v = step(v);"})
    assert "omitted" in rendered
    assert rendered.count("[!]") == 1


def test_delta_json_shape():
    a = [hit("L5", {"v": "1"})]
    b = [hit("L5", {"v": "2"})]
    delta = build_delta("fn", trace(BinaryRole.OriginalA, a),
                        trace(BinaryRole.SubstitutedB, b))
    doc = delta_to_json(delta)
    assert '"first_divergence"' in doc and '"DiffVars"' in doc


# --- sanitizer reports -------------------------------------------------------

OVERFLOW_UNIT = textwrap.dedent("""\
    int fn_bad(int n) {
      int buf[4];
      for (int i = 0; i <= 4; i++)
        buf[i] = n + i;
      return buf[0];
    }
    int main(void) { return fn_bad(3) & 0; }
""")


@pytest.fixture(scope="module")
def asan_stderr(tmp_path_factory):
    d = tmp_path_factory.mktemp("asan")
    src = d / "fn_bad.unit.cpp"
    src.write_text(OVERFLOW_UNIT)
    exe = d / "bad"
    subprocess.run(["g++", "-fsanitize=address", "-g", "-O0", "-o", str(exe),
                    str(src)], check=True, capture_output=True)
    proc = subprocess.run([str(exe)], capture_output=True, text=True,
                          env={"ASAN_OPTIONS": "detect_leaks=0"})
    assert proc.returncode != 0
    return proc.stderr


@requires_binutils
def test_parse_san_report_real_output(asan_stderr):
    report = parse_san_report(asan_stderr,
                              substitute_sources=("fn_bad.unit.cpp",))
    assert report.violation_kind == "stack-buffer-overflow"
    assert report.access == {"op": "WRITE", "size": 4}
    # the faulting line is the store inside the loop
    assert report.faulting_frame.endswith("fn_bad.unit.cpp:4")
    assert "Shadow bytes" in report.shadow_context
    rendered = render_san_report(report)
    assert "stack-buffer-overflow" in rendered


@requires_binutils
def test_parse_san_report_filters_foreign_frames(asan_stderr):
    with pytest.raises(UnresolvableFrame):
        parse_san_report(asan_stderr, substitute_sources=("other.unit.cpp",))


def test_parse_san_report_absent():
    assert parse_san_report("all tests passed\n") is None


# --- runtime repair loop -----------------------------------------------------

UNIT_BAD = "int fn(int x) { return x + 1; }\n"
UNIT_GOOD = "int fn(int x) { return x + 2; }\n"

FIX = """\
fn.unit.cpp
```c
<<<<<<< SEARCH
return x + 1;
=======
return x + 2;
>>>>>>> REPLACE
```
"""

BREAKING = """\
fn.unit.cpp
```c
<<<<<<< SEARCH
return x + 1;
=======
return x + oops;
>>>>>>> REPLACE
```
"""


class OneShot:
    def __init__(self, *responses):
        self._r = list(responses)

    def generate(self, prompt):
        return self._r.pop(0) if self._r else ""


def make_eval(unit_path):
    """Evaluation keyed purely on the unit text (no real execution)."""
    def evaluate():
        good = "x + 2" in unit_path.read_text()
        return RuntimeEvaluation(failing=() if good else ("t1",),
                                 passing=("t0",) + (("t1",) if good else ()),
                                 evidence=None)
    return evaluate


@requires_binutils
def test_repair_runtime_applies_fix(tmp_path):
    unit = tmp_path / "fn.unit.cpp"
    unit.write_text(UNIT_BAD)
    out = repair_runtime(unit, OneShot(FIX), make_eval(unit),
                         RepairBudget(), CompileOptions())
    assert out.ok and out.iterations == 1 and out.rollbacks == 0
    assert "x + 2" in unit.read_text()


@requires_binutils
def test_repair_runtime_rolls_back_broken_patch(tmp_path):
    unit = tmp_path / "fn.unit.cpp"
    unit.write_text(UNIT_BAD)
    out = repair_runtime(unit, OneShot(BREAKING, FIX), make_eval(unit),
                         RepairBudget(), CompileOptions())
    assert out.ok and out.rollbacks == 1
    assert "oops" not in unit.read_text()


@requires_binutils
def test_repair_runtime_budget_exhaustion(tmp_path):
    unit = tmp_path / "fn.unit.cpp"
    unit.write_text(UNIT_BAD)
    with pytest.raises(BudgetExhausted):
        repair_runtime(unit, OneShot(), make_eval(unit),
                       RepairBudget(runtime_iters_max=2), CompileOptions())
    assert unit.read_text() == UNIT_BAD


@requires_binutils
def test_repair_runtime_noop_when_already_green(tmp_path):
    unit = tmp_path / "fn.unit.cpp"
    unit.write_text(UNIT_GOOD)
    out = repair_runtime(unit, OneShot(), make_eval(unit))
    assert out.ok and out.iterations == 0
