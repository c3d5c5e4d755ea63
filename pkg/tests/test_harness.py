"""Test execution, oracle recording, CS/BE arithmetic and report round-trips."""

import math

import pytest
from hypothesis import given, strategies as st

from resub.harness import (FailureReason, FunctionReport, Oracle, RepairStage,
                           RunReport, TestCase, compute_metrics, emit_report,
                           record_oracle, run_suite, run_test)
from resub.errors import HarnessSetupFailed


class TestRunTest:
    def test_pass_on_matching_oracle(self):
        r = run_test("/bin/sh", TestCase("t", ("-c", "echo hi"),
                                         oracle=Oracle(stdout="hi\n")))
        assert r.passed and r.reason is FailureReason.Passed

    def test_output_mismatch(self):
        r = run_test("/bin/sh", TestCase("t", ("-c", "echo bye"),
                                         oracle=Oracle(stdout="hi\n")))
        assert not r.passed and r.reason is FailureReason.OutputMismatch

    def test_exit_code_mismatch_is_crash_reason(self):
        r = run_test("/bin/sh", TestCase("t", ("-c", "exit 3"),
                                         oracle=Oracle(stdout="")))
        assert not r.passed and r.reason is FailureReason.Crash
        assert r.exit_code == 3

    def test_signal_death_is_crash(self):
        r = run_test("/bin/sh", TestCase("t", ("-c", "kill -SEGV $$"),
                                         oracle=Oracle(stdout="")))
        assert not r.passed and r.reason is FailureReason.Crash
        assert r.exit_code < 0

    def test_sanitizer_marker_overrides_everything(self):
        r = run_test("/bin/sh", TestCase(
            "t", ("-c", "echo 'ERROR: AddressSanitizer: heap-use-after-free' >&2"),
            oracle=Oracle(stdout="")))
        assert not r.passed and r.reason is FailureReason.SanViolation

    def test_timeout(self):
        r = run_test("/bin/sh", TestCase("t", ("-c", "sleep 30"),
                                         oracle=Oracle(stdout="")),
                     timeout=0.3)
        assert not r.passed and r.reason is FailureReason.Timeout
        assert r.exit_code is None

    def test_staged_files_and_stdin(self):
        t = TestCase("t", ("-c", "cat staged; cat -"),
                     oracle=Oracle(stdout="file-part\nstdin-part"),
                     stdin="stdin-part",
                     files={"staged": "file-part\n"})
        assert run_test("/bin/sh", t).passed

    def test_missing_oracle_raises(self):
        with pytest.raises(HarnessSetupFailed):
            run_test("/bin/sh", TestCase("t", ("-c", "true")))

    def test_scrubbed_environment(self):
        t = TestCase("t", ("-c", "echo ${SECRET_TOKEN:-unset}"),
                     oracle=Oracle(stdout="unset\n"))
        import os
        os.environ["SECRET_TOKEN"] = "leak"
        try:
            assert run_test("/bin/sh", t).passed
        finally:
            del os.environ["SECRET_TOKEN"]


def test_record_oracle_roundtrip():
    t = TestCase("t", ("-c", "echo out; echo err >&2; exit 5"))
    oracle = record_oracle("/bin/sh", t)
    assert oracle.stdout == "out\n"
    assert oracle.stderr == "err\n"
    assert oracle.exit_code == 5
    t.oracle = oracle
    assert run_test("/bin/sh", t).passed


def test_run_suite_checks_preloads_exist(tmp_path):
    with pytest.raises(HarnessSetupFailed):
        run_suite("/bin/sh", [], preloads=[tmp_path / "missing.so"])


# --- metrics -----------------------------------------------------------------

def fr(name, file, compiled, tests, stage=RepairStage.NoRepair):
    return FunctionReport(function=name, file=file, compiled=compiled,
                          tests=tests, repaired_by=stage)


T_OK = [("a", True), ("b", True)]
T_BAD = [("a", True), ("b", False)]


def test_compute_metrics_hand_computed():
    reports = [
        fr("f1", "x.c", True, T_OK),
        fr("f2", "x.c", True, T_BAD),     # compiled, behavioral fail
        fr("f3", "y.c", False, []),       # compile fail
        fr("f4", "y.c", True, T_OK),
        fr("f5", "z.c", True, T_OK),
    ]
    m = compute_metrics(reports)
    assert math.isclose(m.function_cs, 4 / 5)
    assert math.isclose(m.function_be, 3 / 5)
    # all-functions rule: x.c spoiled by f2's tests, y.c by f3's compile
    assert math.isclose(m.file_cs, 2 / 3)
    assert math.isclose(m.file_be, 1 / 3)


def test_one_failing_function_zeroes_its_file():
    reports = [fr(f"f{i}", "only.c", True, T_OK) for i in range(9)]
    assert compute_metrics(reports).file_be == 1.0
    reports[4] = fr("f4", "only.c", True, T_BAD)
    m = compute_metrics(reports)
    assert m.file_be == 0.0 and m.file_cs == 1.0
    assert math.isclose(m.function_be, 8 / 9)


def test_empty_report_is_na():
    m = compute_metrics([])
    assert m.function_cs is None and m.file_be is None
    assert "N/A" in emit_report(m)


def test_behavioral_requires_tests_and_compile():
    assert not fr("f", "x.c", True, []).behavioral
    assert not fr("f", "x.c", False, T_OK).behavioral
    assert fr("f", "x.c", True, T_OK).behavioral


@given(st.lists(
    st.builds(fr,
              st.sampled_from(["f1", "f2", "f3", "f4"]),
              st.sampled_from(["x.c", "y.c"]),
              st.booleans(),
              st.lists(st.tuples(st.sampled_from(["a", "b"]), st.booleans()),
                       min_size=1, max_size=2),
              st.sampled_from(list(RepairStage))),
    min_size=1, max_size=10))
def test_metrics_invariants(reports):
    m = compute_metrics(reports)
    assert 0.0 <= m.function_be <= m.function_cs <= 1.0
    assert 0.0 <= m.file_be <= m.file_cs <= 1.0
    back = RunReport.from_json(m.to_json())
    assert back.functions == m.functions
    assert back.function_cs == m.function_cs


def test_emit_report_stage_attribution():
    reports = [
        fr("f1", "x.c", True, T_OK, RepairStage.ASanStage),
        fr("f2", "x.c", True, T_OK, RepairStage.BPDiffStage),
        fr("f3", "x.c", True, T_BAD, RepairStage.Unrepaired),
    ]
    text = emit_report(compute_metrics(reports))
    row = text.splitlines()[1]
    assert row.split() == ["3", "100.0%", "66.7%", "1", "1", "1"]
