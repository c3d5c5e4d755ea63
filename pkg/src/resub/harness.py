"""Test execution against original and substituted binaries, CS/BE metrics,
and run reports.

CS (compilation success) is the fraction of functions whose unit compiles;
BE (behavioral equivalence) additionally requires every associated test to
pass. File-level rates apply the all-functions rule: a file counts only when
every one of its functions succeeds.
"""

from __future__ import annotations

import enum
import json
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import HarnessSetupFailed

REPORT_SCHEMA_VERSION = 1
DEFAULT_TIMEOUT = 120.0
KILL_GRACE = 2.0


@dataclass
class Oracle:
    stdout: str
    stderr: str = ""
    exit_code: int = 0
    check_stderr: bool = False


@dataclass
class TestCase:
    id: str
    argv: tuple
    oracle: Oracle | None = None      # None until recorded from the original
    stdin: str = ""
    files: dict = field(default_factory=dict)   # name -> content staged in cwd


class FailureReason(enum.Enum):
    Passed = "Passed"
    OutputMismatch = "OutputMismatch"
    Crash = "Crash"
    Timeout = "Timeout"
    SanViolation = "SanViolation"


@dataclass
class TestResult:
    test_id: str
    passed: bool
    reason: FailureReason
    stdout: str
    stderr: str
    exit_code: int | None


def _scrubbed_env(passthrough=("PATH", "HOME", "LANG"), extra=None) -> dict:
    env = {k: os.environ[k] for k in passthrough if k in os.environ}
    env.update(extra or {})
    return env


def run_test(binary, test: TestCase, preloads=(), extra_env=None,
             timeout: float = DEFAULT_TIMEOUT,
             passthrough=("PATH", "HOME", "LANG")) -> TestResult:
    """One test in a scratch directory with a scrubbed environment.
    Crash, timeout, or a sanitizer violation all count as failure."""
    env = _scrubbed_env(passthrough, extra_env)
    if preloads:
        env["LD_PRELOAD"] = ":".join(str(p) for p in preloads)
    binary = Path(binary).resolve()
    with tempfile.TemporaryDirectory(prefix="resub_test_") as scratch:
        for name, content in test.files.items():
            (Path(scratch) / name).write_text(content)
        try:
            proc = subprocess.run(
                [str(binary), *test.argv], input=test.stdin,
                capture_output=True, text=True, env=env, cwd=scratch,
                timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            return TestResult(test.id, False, FailureReason.Timeout,
                              (exc.stdout or b"").decode() if isinstance(exc.stdout, bytes)
                              else (exc.stdout or ""),
                              (exc.stderr or b"").decode() if isinstance(exc.stderr, bytes)
                              else (exc.stderr or ""), None)
        except OSError as exc:
            raise HarnessSetupFailed(str(exc)) from exc
    if "ERROR: AddressSanitizer" in proc.stderr:
        return TestResult(test.id, False, FailureReason.SanViolation,
                          proc.stdout, proc.stderr, proc.returncode)
    if proc.returncode is not None and proc.returncode < 0:
        return TestResult(test.id, False, FailureReason.Crash,
                          proc.stdout, proc.stderr, proc.returncode)
    oracle = test.oracle
    if oracle is None:
        raise HarnessSetupFailed(f"test {test.id} has no recorded oracle")
    ok = (proc.stdout == oracle.stdout and proc.returncode == oracle.exit_code
          and (not oracle.check_stderr or proc.stderr == oracle.stderr))
    reason = FailureReason.Passed if ok else (
        FailureReason.Crash if proc.returncode != oracle.exit_code
        and proc.returncode != 0 else FailureReason.OutputMismatch)
    return TestResult(test.id, ok, reason if not ok else FailureReason.Passed,
                      proc.stdout, proc.stderr, proc.returncode)


def record_oracle(binary, test: TestCase, timeout: float = DEFAULT_TIMEOUT,
                  passthrough=("PATH", "HOME", "LANG")) -> Oracle:
    """Capture the oracle from the unsubstituted binary; must run before any
    substitution of that binary."""
    env = _scrubbed_env(passthrough)
    binary = Path(binary).resolve()
    with tempfile.TemporaryDirectory(prefix="resub_oracle_") as scratch:
        for name, content in test.files.items():
            (Path(scratch) / name).write_text(content)
        proc = subprocess.run([str(binary), *test.argv], input=test.stdin,
                              capture_output=True, text=True, env=env,
                              cwd=scratch, timeout=timeout)
    return Oracle(stdout=proc.stdout, stderr=proc.stderr,
                  exit_code=proc.returncode)


def run_suite(binary, tests, preloads=(), extra_env=None,
              timeout: float = DEFAULT_TIMEOUT,
              passthrough=("PATH", "HOME", "LANG")) -> list:
    """All tests serially (they share the substituted binary's state)."""
    if preloads:
        for p in preloads:
            if not Path(p).exists():
                raise HarnessSetupFailed(f"preload {p} does not exist")
    return [run_test(binary, t, preloads=preloads, extra_env=extra_env,
                     timeout=timeout, passthrough=passthrough)
            for t in tests]


# --- metrics -----------------------------------------------------------------

class RepairStage(enum.Enum):
    NoRepair = "NoRepair"
    CompileLoop = "CompileLoop"
    ASanStage = "ASanStage"
    BPDiffStage = "BPDiffStage"
    Unrepaired = "Unrepaired"


@dataclass
class FunctionReport:
    function: str
    file: str
    compiled: bool
    tests: list                      # (test_id, passed)
    compile_iterations: int = 0
    runtime_iterations: int = 0
    repaired_by: RepairStage = RepairStage.NoRepair

    @property
    def behavioral(self) -> bool:
        return self.compiled and bool(self.tests) and all(p for _, p in self.tests)


@dataclass
class RunReport:
    functions: list
    function_cs: float | None = None
    function_be: float | None = None
    file_cs: float | None = None
    file_be: float | None = None

    def to_json(self) -> str:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "functions": [
                {
                    "function": f.function,
                    "file": f.file,
                    "compiled": f.compiled,
                    "tests": [[tid, passed] for tid, passed in f.tests],
                    "compile_iterations": f.compile_iterations,
                    "runtime_iterations": f.runtime_iterations,
                    "repaired_by": f.repaired_by.value,
                }
                for f in self.functions
            ],
            "aggregates": {
                "function_cs": self.function_cs,
                "function_be": self.function_be,
                "file_cs": self.file_cs,
                "file_be": self.file_be,
            },
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        functions = [
            FunctionReport(
                function=f["function"], file=f["file"], compiled=f["compiled"],
                tests=[(tid, passed) for tid, passed in f["tests"]],
                compile_iterations=f["compile_iterations"],
                runtime_iterations=f["runtime_iterations"],
                repaired_by=RepairStage(f["repaired_by"]))
            for f in doc["functions"]
        ]
        agg = doc["aggregates"]
        return cls(functions=functions, function_cs=agg["function_cs"],
                   function_be=agg["function_be"], file_cs=agg["file_cs"],
                   file_be=agg["file_be"])


def compute_metrics(functions) -> RunReport:
    """Function- and file-level CS/BE. Empty input reports N/A (None)."""
    functions = list(functions)
    report = RunReport(functions=functions)
    if not functions:
        return report
    total = len(functions)
    report.function_cs = sum(f.compiled for f in functions) / total
    report.function_be = sum(f.behavioral for f in functions) / total

    by_file: dict = {}
    for f in functions:
        by_file.setdefault(f.file, []).append(f)
    nfiles = len(by_file)
    report.file_cs = sum(all(f.compiled for f in fs)
                         for fs in by_file.values()) / nfiles
    report.file_be = sum(all(f.behavioral for f in fs)
                         for fs in by_file.values()) / nfiles
    assert report.function_be <= report.function_cs + 1e-12
    assert report.file_be <= report.file_cs + 1e-12
    return report


def _pct(x) -> str:
    return "N/A" if x is None else f"{100 * x:.1f}%"


def emit_report(report: RunReport) -> str:
    """Human summary table with per-stage repair attribution columns."""
    fns = report.functions
    compiled = [f for f in fns if f.compiled]
    runtime_failed = sum(1 for f in compiled if not f.behavioral)
    asan_fixed = sum(1 for f in fns if f.repaired_by == RepairStage.ASanStage
                     and f.behavioral)
    bpdiff_fixed = sum(1 for f in fns if f.repaired_by == RepairStage.BPDiffStage
                       and f.behavioral)
    lines = [
        f"{'Functions':<12}{'CS':>8}{'BE':>8}{'RuntimeFailed':>15}"
        f"{'+ ASan Fix':>12}{'+ BP-Diff Fix':>15}",
        f"{len(fns):<12}{_pct(report.function_cs):>8}{_pct(report.function_be):>8}"
        f"{runtime_failed:>15}{asan_fixed:>12}{bpdiff_fixed:>15}",
        "",
        f"{'Files':<12}{'CS':>8}{'BE':>8}",
        f"{len({f.file for f in fns}):<12}{_pct(report.file_cs):>8}"
        f"{_pct(report.file_be):>8}",
    ]
    return "\n".join(lines) + "\n"
