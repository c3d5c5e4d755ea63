"""Per-function orchestration: corpus context -> compilable unit -> mapping
table -> substituted test runs -> evidence-driven repair -> report row.

The stages stay loosely coupled: everything here is glue over ctxbuild,
buildloop, binmap, harness, tracekit and diffrepair, plus the corpus-manifest
adapter used by the CLI and the acceptance runs.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

from . import binmap, ctxbuild, reloc
from .buildloop import (CompileOptions, RepairBudget, ScriptedOracle,
                        repair_compile)
from .config import Config
from .diffrepair import (RuntimeEvaluation, SanReport, build_delta,
                         parse_san_report, repair_runtime)
from .errors import (AlignmentFailed, BudgetExhausted, ResubError,
                     UnresolvableFrame)
from .harness import (FailureReason, FunctionReport, Oracle, RepairStage,
                      TestCase, compute_metrics, record_oracle, run_suite)
from .tracekit import (BinaryRole, ExecutionTrace, collect_trace,
                       load_line_map, make_flow_plan, make_plan,
                       normalize_trace, symmetric_resolve)

log = logging.getLogger(__name__)

MAX_TRACED_TESTS = 3        # failing tests traced per BP-Diff round


@dataclass
class TargetSpec:
    """One substitution job: a function inside a host binary, its pseudocode
    corpus, the line sidecar tying pseudocode lines to host instructions, and
    the tests that define observable behavior."""
    host_image: Path
    corpus_dir: Path
    function: str
    pseudo_linemap: Path
    tests: list
    file_label: str = ""
    platform_includes: tuple = ()


def find_sanitizer_runtime(cc: str = "gcc") -> Path | None:
    """The shared AddressSanitizer runtime to preload ahead of the engine."""
    try:
        out = subprocess.run([cc, "-print-file-name=libasan.so"],
                             capture_output=True, text=True, check=True)
    except (OSError, subprocess.CalledProcessError):
        return None
    path = Path(out.stdout.strip())
    if not path.is_absolute() or not path.exists():
        return None
    return path.resolve()


def load_pseudo_linemap(path) -> dict:
    doc = json.loads(Path(path).read_text())
    return {int(line): int(offset) for line, offset in doc["lines"].items()}


def unit_body_window(unit_text: str, function: str) -> str:
    """The unit with everything but the target function's definition blanked,
    so breakpoint plans carry unit-file line numbers without the scaffolding
    (weak externs, the extern-C wrapper) polluting alignment."""
    lines = unit_text.splitlines()
    sig = re.compile(rf"\b{re.escape(function)}\s*\(")
    start = None
    for i, line in enumerate(lines):
        if sig.search(line) and not line.rstrip().endswith(";") \
                and "__attribute__" not in line:
            start = i
    if start is None:
        return unit_text
    end = len(lines) - 1
    for i in range(len(lines) - 1, start, -1):
        if lines[i].strip() == "}":
            end = i
            break
    window = [""] * len(lines)
    window[start:end + 1] = lines[start:end + 1]
    return "\n".join(window)


@dataclass
class _Runtime:
    """Shared per-corpus artifacts."""
    engine: Path
    sanitizer: Path | None

    @property
    def preloads(self):
        return ([self.sanitizer, self.engine] if self.sanitizer
                else [self.engine])


def prepare_runtime(build_dir, cc: str = "cc",
                    sanitizer_runtime: str = "") -> _Runtime:
    engine = reloc.build_engine(build_dir, cc=cc)
    san = Path(sanitizer_runtime) if sanitizer_runtime \
        else find_sanitizer_runtime()
    if san is not None and not san.exists():
        san = None
    return _Runtime(engine=engine, sanitizer=san)


class _EvidenceCollector:
    """evaluate() callable handed to repair_runtime: rebuild the mapping for
    the current module, run the suite substituted, and distill evidence
    (a sanitizer report preempts breakpoint-matched differential tracing)."""

    def __init__(self, spec: TargetSpec, unit_path: Path, workdir: Path,
                 runtime: _Runtime, cfg: Config):
        self.spec = spec
        self.unit_path = unit_path
        self.module_path = unit_path.with_suffix(".so")
        self.mapping_path = workdir / f"{spec.function}.mapping.json"
        self.workdir = workdir
        self.runtime = runtime
        self.cfg = cfg
        self.pseudocode = (Path(spec.corpus_dir) / f"{spec.function}.c").read_text()
        self.pseudo_map = load_pseudo_linemap(spec.pseudo_linemap)
        self.last_results: list = []
        self.last_evidence_kind: str | None = None

    # -- substituted environment ------------------------------------------

    def _extra_env(self) -> dict:
        env = {
            "RESUB_MAPPING": str(self.mapping_path),
            "RESUB_MODULE": str(self.module_path),
            "BINARY_NAME": os.path.basename(str(self.spec.host_image)),
            "FUNCTION_NAME": self.spec.function,
            "ASAN_OPTIONS": "detect_leaks=0:verify_asan_link_order=0",
        }
        if self.runtime.sanitizer:
            env["RESUB_CELL_ADDR"] = f"{reloc.SANITIZER_SAFE_CELL_ADDRESS:x}"
        return env

    def _base_env(self, extra=None) -> dict:
        env = {k: os.environ[k] for k in self.cfg.harness.passthrough_env
               if k in os.environ}
        env.update(extra or {})
        return env

    # -- tracing -----------------------------------------------------------

    def _collect_side(self, role: BinaryRole, test: TestCase, sites,
                      entry_offset: int):
        spec, cfg = self.spec, self.cfg
        if role is BinaryRole.OriginalA:
            env = self._base_env({
                "LD_PRELOAD": str(self.runtime.engine),
                "BINARY_NAME": os.path.basename(str(spec.host_image)),
            })
            module = None
        else:
            env = self._base_env(self._extra_env())
            env["LD_PRELOAD"] = ":".join(str(p) for p in self.runtime.preloads)
            module = self.module_path
        trace = collect_trace(
            [str(spec.host_image), *test.argv], sites,
            host_path=spec.host_image, entry_offset=entry_offset,
            binary_role=role, test_id=test.id, env=env,
            function=spec.function, module_path=module,
            gdb=cfg.trace.gdb, timeout=cfg.trace.per_test_timeout,
            hit_cap=cfg.trace.hit_cap, scratch=self.workdir)
        return normalize_trace(trace)

    def _bp_diff(self, failing_tests):
        spec, cfg = self.spec, self.cfg
        unit_text = self.unit_path.read_text()
        window = unit_body_window(unit_text, spec.function)
        try:
            plan = make_plan(window, self.pseudocode, spec.function,
                             threshold=cfg.trace.alignment_threshold)
        except AlignmentFailed:
            plan = make_flow_plan(window, self.pseudocode, spec.function)
        map_b = load_line_map(self.module_path, self.unit_path.name)
        sites_a, sites_b, dropped = symmetric_resolve(
            plan, self.pseudo_map, map_b)
        if dropped:
            log.debug("%s: %d plan sites unmappable on one side",
                      spec.function, len(dropped))
        table = binmap.MappingTable.load(self.mapping_path)
        redirect = next(e for e in table.entries
                        if e.kind is binmap.EntryKind.FunctionRedirect
                        and e.name == spec.function)

        merged_a = ExecutionTrace(binary_role=BinaryRole.OriginalA, hits=[])
        merged_b = ExecutionTrace(binary_role=BinaryRole.SubstitutedB, hits=[])
        for test in failing_tests[:MAX_TRACED_TESTS]:
            ta = self._collect_side(BinaryRole.OriginalA, test, sites_a,
                                    redirect.bin_offset)
            tb = self._collect_side(BinaryRole.SubstitutedB, test, sites_b,
                                    redirect.bin_offset)
            merged_a.hits.extend(ta.hits)
            merged_a.signals.extend(ta.signals)
            merged_b.hits.extend(tb.hits)
            merged_b.signals.extend(tb.signals)

        delta = build_delta(spec.function, merged_a, merged_b,
                            source=self.pseudocode)
        pseudo_lines = self.pseudocode.splitlines()
        source_lines = {}
        for site in plan.sites:
            if 1 <= site.pseudo_line <= len(pseudo_lines):
                source_lines[site.id] = pseudo_lines[site.pseudo_line - 1].strip()
        return delta, source_lines

    # -- the evaluate() contract ------------------------------------------

    def __call__(self) -> RuntimeEvaluation:
        spec, cfg = self.spec, self.cfg
        table = binmap.map_images(spec.host_image, self.module_path,
                                  spec.function)
        table.save(self.mapping_path)

        results = run_suite(
            spec.host_image, spec.tests, preloads=self.runtime.preloads,
            extra_env=self._extra_env(), timeout=cfg.harness.per_test_timeout,
            passthrough=cfg.harness.passthrough_env)
        self.last_results = results
        failing = [r for r in results if not r.passed]
        passing = tuple(r.test_id for r in results if r.passed)

        evidence = None
        source_lines: dict = {}
        san_hits = [r for r in failing
                    if r.reason is FailureReason.SanViolation]
        if san_hits:
            try:
                evidence = parse_san_report(
                    san_hits[0].stderr,
                    substitute_sources=(self.unit_path.name,))
            except UnresolvableFrame as exc:
                log.warning("%s: sanitizer report outside the substitute: %s",
                            spec.function, exc)
        elif failing:
            failing_tests = [t for t in spec.tests
                             if t.id in {r.test_id for r in failing}]
            try:
                evidence, source_lines = self._bp_diff(failing_tests)
            except (ResubError, subprocess.SubprocessError) as exc:
                log.warning("%s: differential trace unavailable: %s",
                            spec.function, exc)

        if failing:
            self.last_evidence_kind = (
                "san" if isinstance(evidence, SanReport)
                else "delta" if evidence is not None else self.last_evidence_kind)
        return RuntimeEvaluation(
            failing=tuple(r.test_id for r in failing), passing=passing,
            evidence=evidence, source_lines=source_lines)


def substitute_function(spec: TargetSpec, client, cfg: Config,
                        workdir, runtime: _Runtime,
                        compile_client=None) -> FunctionReport:
    """Run the whole per-function flow and report the row that feeds the
    CS/BE metrics. Never raises for repair failure; those are report rows."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    function = spec.function
    file_label = spec.file_label or os.path.basename(str(spec.host_image))
    compile_client = compile_client or client

    for test in spec.tests:
        if test.oracle is None:
            test.oracle = record_oracle(spec.host_image, test,
                                        timeout=cfg.harness.per_test_timeout)

    symbol_table = binmap.scan_host_symbols(spec.host_image)
    ctx = ctxbuild.extract_decls(spec.corpus_dir, symbol_table)
    unit_paths = ctxbuild.emit_corpus(
        ctx, workdir, platform_includes=spec.platform_includes)
    unit_path = Path(unit_paths[function])

    options = CompileOptions(
        cc=cfg.compiler.cc, base_flags=tuple(cfg.compiler.base_flags),
        optimize=cfg.compiler.optimize, sanitize=True,
        include_dirs=tuple(cfg.compiler.include_dirs),
        extra_flags=tuple(cfg.compiler.extra_flags),
        timeout=cfg.compiler.timeout)
    budget = RepairBudget(cfg.budget.compile_iters_max,
                          cfg.budget.runtime_iters_max)

    try:
        outcome = repair_compile(unit_path, compile_client, budget, options)
    except BudgetExhausted as exc:
        failed = exc.args[0] if exc.args else None
        iters = len(failed.iterations) if hasattr(failed, "iterations") \
            else budget.compile_iters_max
        return FunctionReport(
            function=function, file=file_label, compiled=False,
            tests=[(t.id, False) for t in spec.tests],
            compile_iterations=iters, repaired_by=RepairStage.Unrepaired)
    compile_iterations = len(outcome.iterations)

    evaluate = _EvidenceCollector(spec, unit_path, workdir, runtime, cfg)
    struct_defs = ""
    types_path = Path(spec.corpus_dir) / "types.h"
    if types_path.exists():
        struct_defs = types_path.read_text()

    runtime_iterations = 0
    try:
        result = repair_runtime(
            unit_path, client, evaluate, budget, options,
            compile_client=compile_client, struct_defs=struct_defs)
        runtime_iterations = result.iterations
        if runtime_iterations:
            stage = (RepairStage.ASanStage
                     if evaluate.last_evidence_kind == "san"
                     else RepairStage.BPDiffStage)
        elif compile_iterations:
            stage = RepairStage.CompileLoop
        else:
            stage = RepairStage.NoRepair
    except BudgetExhausted:
        runtime_iterations = budget.runtime_iters_max
        stage = RepairStage.Unrepaired

    tests = [(r.test_id, r.passed) for r in evaluate.last_results] or \
        [(t.id, False) for t in spec.tests]
    return FunctionReport(
        function=function, file=file_label, compiled=True, tests=tests,
        compile_iterations=compile_iterations,
        runtime_iterations=runtime_iterations, repaired_by=stage)


# --- corpus manifest adapter -------------------------------------------------

def load_tests(path) -> list:
    out = []
    for rec in json.loads(Path(path).read_text()):
        oracle = rec.get("oracle")
        out.append(TestCase(
            id=rec["id"], argv=tuple(rec["argv"]),
            oracle=Oracle(stdout=oracle["stdout"], stderr=oracle["stderr"],
                          exit_code=oracle["exit_code"]) if oracle else None,
            stdin=rec.get("stdin", ""), files=dict(rec.get("files", {}))))
    return out


def load_corpus_targets(manifest_path, variant: str = "defective",
                        hosts=None, functions=None):
    """(TargetSpec, answer_key) pairs from a built corpus manifest."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    doc = json.loads(manifest_path.read_text())
    for host, rec in sorted(doc["hosts"].items()):
        if hosts and host not in hosts:
            continue
        answer_key = json.loads((root / rec["answer_key"]).read_text())
        corpus_dir = root / rec["corpus"][variant]
        for fn, meta in sorted(rec["functions"].items()):
            if functions and fn not in functions:
                continue
            spec = TargetSpec(
                host_image=root / rec["binary"],
                corpus_dir=corpus_dir,
                function=fn,
                pseudo_linemap=root / meta["linemap"],
                tests=load_tests(root / rec["tests"]),
                file_label=host,
                platform_includes=tuple(rec.get("platform_includes", ())))
            yield spec, answer_key


def run_corpus(manifest_path, cfg: Config | None = None,
               variant: str = "defective", out_dir=None,
               client_factory=None, hosts=None, functions=None):
    """Substitute every corpus function and aggregate CS/BE.

    ``client_factory(answer_key) -> client``; defaults to the scripted
    oracle replaying the corpus's known fixes.
    """
    cfg = cfg or Config()
    out_dir = Path(out_dir) if out_dir else \
        Path(manifest_path).parent / f"run_{variant}"
    if out_dir.exists():
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True)
    runtime = prepare_runtime(out_dir)
    factory = client_factory or (lambda key: ScriptedOracle(key))

    reports = []
    for spec, answer_key in load_corpus_targets(
            manifest_path, variant=variant, hosts=hosts, functions=functions):
        workdir = out_dir / spec.file_label / spec.function
        report = substitute_function(
            spec, factory(answer_key), cfg, workdir, runtime)
        reports.append(report)
        log.info("%s/%s: compiled=%s behavioral=%s via %s",
                 spec.file_label, spec.function, report.compiled,
                 report.behavioral, report.repaired_by.value)

    run_report = compute_metrics(reports)
    (out_dir / "report.json").write_text(run_report.to_json())
    return run_report
