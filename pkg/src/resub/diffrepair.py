"""Trace alignment, delta classification, sanitizer-report parsing, and the
bounded runtime repair loop.

Original (A) and substituted (B) traces are paired per invocation, their hit
streams aligned by breakpoint id (LCS), and divergences classified into
blocks: AllSame, DiffVars, OnlyA (missing), OnlyB (extra), Signal. The
rendered delta — or a parsed sanitizer report, which takes priority — feeds
the runtime repair prompt.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .buildloop import (
    PROMPT_DIR,
    CompileOptions,
    RepairBudget,
    compile_unit,
    fill_template,
    parse_patch_blocks,
    apply_patch,
    repair_compile,
)
from .errors import (
    BudgetExhausted,
    NoBlocksFound,
    SearchNotFound,
    UnresolvableFrame,
)
from .tracekit import ExecutionTrace, TraceHit

ELISION_HEAD = 2       # hits shown at each end of an elided run
ELISION_TAIL = 2
BACKTRACE_KEEP = 3


class DeltaKind(enum.Enum):
    AllSame = "All Same"
    DiffVars = "Diff Vars"
    OnlyA = "Only Binary A"
    OnlyB = "Only Binary B"
    Signal = "Signal"


@dataclass(frozen=True)
class DeltaEntry:
    bp_id: str
    a_values: dict | None      # None when absent on that side
    b_values: dict | None
    signal: str = ""
    backtrace: tuple = ()

    @property
    def same(self) -> bool:
        return self.a_values is not None and self.a_values == self.b_values


@dataclass
class DeltaBlock:
    kind: DeltaKind
    entries: list
    anchor: str                # last matched site id before the block, "" if none


@dataclass(frozen=True)
class CallPair:
    test_id: str
    call_hash: str
    invocation_index: int
    call_depth: int
    a_hits: tuple
    b_hits: tuple


@dataclass
class SemanticDelta:
    function: str
    calls: list                # (CallPair-or-label, list of DeltaBlock)
    first_divergence: tuple | None   # (call label, site id)
    source_excerpt: str = ""
    struct_defs: str = ""

    @property
    def empty(self) -> bool:
        return self.first_divergence is None


@dataclass(frozen=True)
class SanReport:
    violation_kind: str
    access: dict               # {"op": "READ"|"WRITE", "size": int}
    faulting_frame: str        # file:line inside the substitute
    shadow_context: str


# --- call pairing ------------------------------------------------------------

def _group_calls(trace: ExecutionTrace) -> dict:
    groups: dict = {}
    for hit in trace.hits:
        key = (hit.test_id, hit.invocation_index, hit.call_depth)
        groups.setdefault(key, []).append(hit)
    return groups


def pair_calls(trace_a: ExecutionTrace, trace_b: ExecutionTrace):
    """Match invocations by (test id, invocation index, call depth).

    Returns (pairs, a_only_keys, b_only_keys); unpaired calls become
    whole-call OnlyA/OnlyB blocks downstream.
    """
    ga, gb = _group_calls(trace_a), _group_calls(trace_b)
    pairs = []
    for key in sorted(set(ga) & set(gb)):
        test_id, inv, depth = key
        a_hits = tuple(ga[key])
        pairs.append(CallPair(
            test_id=test_id, call_hash=a_hits[0].call_hash,
            invocation_index=inv, call_depth=depth,
            a_hits=a_hits, b_hits=tuple(gb[key])))
    a_only = sorted(set(ga) - set(gb))
    b_only = sorted(set(gb) - set(ga))
    return pairs, a_only, b_only


# --- hit-stream diffing ------------------------------------------------------

def _lcs_ids(a: tuple, b: tuple) -> list:
    """LCS over bp_id sequences; value equality is judged after alignment."""
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i].bp_id == b[j].bp_id:
                dp[i][j] = dp[i + 1][j + 1] + 1
            else:
                dp[i][j] = max(dp[i + 1][j], dp[i][j + 1])
    out = []
    i = j = 0
    while i < n and j < m:
        if a[i].bp_id == b[j].bp_id:
            out.append(("=", i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            out.append(("A", i, None))
            i += 1
        else:
            out.append(("B", None, j))
            j += 1
    out.extend(("A", k, None) for k in range(i, n))
    out.extend(("B", None, k) for k in range(j, m))
    return out


def diff_traces(pair: CallPair) -> list:
    """Classified blocks over one invocation's aligned hit streams."""
    steps = _lcs_ids(pair.a_hits, pair.b_hits)
    blocks = []
    current_kind = None
    current: list = []
    anchor = [""]

    def flush():
        nonlocal current_kind, current
        if current:
            blocks.append(DeltaBlock(kind=current_kind, entries=current,
                                     anchor=current_anchor[0]))
        current_kind, current = None, []

    current_anchor = [""]

    for op, i, j in steps:
        if op == "=":
            a, b = pair.a_hits[i], pair.b_hits[j]
            kind = DeltaKind.AllSame if a.values == b.values else DeltaKind.DiffVars
            entry = DeltaEntry(a.bp_id, dict(a.values), dict(b.values))
        elif op == "A":
            a = pair.a_hits[i]
            kind = DeltaKind.OnlyA
            entry = DeltaEntry(a.bp_id, dict(a.values), None)
        else:
            b = pair.b_hits[j]
            kind = DeltaKind.OnlyB
            entry = DeltaEntry(b.bp_id, None, dict(b.values))
        if kind != current_kind:
            flush()
            current_kind = kind
            current_anchor[0] = anchor[0]
        current.append(entry)
        if op == "=":
            anchor[0] = entry.bp_id
    flush()
    return blocks


def build_delta(function: str, trace_a: ExecutionTrace, trace_b: ExecutionTrace,
                source: str = "", struct_defs: str = "") -> SemanticDelta:
    """Full semantic delta across all paired and unpaired invocations."""
    pairs, a_only, b_only = pair_calls(trace_a, trace_b)
    calls = []
    first = None
    for pair in pairs:
        blocks = diff_traces(pair)
        label = f"Call {pair.invocation_index} @ '{pair.test_id}'"
        calls.append((label, blocks))
        if first is None:
            for block in blocks:
                if block.kind != DeltaKind.AllSame:
                    first = (label, block.entries[0].bp_id)
                    break
    ga, gb = _group_calls(trace_a), _group_calls(trace_b)
    for key in a_only:
        label = f"Call {key[1]} @ '{key[0]}' (A only)"
        entries = [DeltaEntry(h.bp_id, dict(h.values), None) for h in ga[key]]
        calls.append((label, [DeltaBlock(DeltaKind.OnlyA, entries, "")]))
        if first is None and entries:
            first = (label, entries[0].bp_id)
    for key in b_only:
        label = f"Call {key[1]} @ '{key[0]}' (B only)"
        entries = [DeltaEntry(h.bp_id, None, dict(h.values)) for h in gb[key]]
        calls.append((label, [DeltaBlock(DeltaKind.OnlyB, entries, "")]))
        if first is None and entries:
            first = (label, entries[0].bp_id)

    # crash evidence: a signal on the substituted side is always a divergence
    for sig in trace_b.signals:
        entry = DeltaEntry(sig.bp_context or "?", None, None,
                           signal=sig.signal, backtrace=sig.backtrace)
        calls.append(("Signal", [DeltaBlock(DeltaKind.Signal, [entry],
                                            sig.bp_context)]))
        if first is None:
            first = ("Signal", sig.bp_context or "?")

    delta = SemanticDelta(function=function, calls=calls, first_divergence=first,
                          source_excerpt=source, struct_defs=struct_defs)
    return delta


# --- rendering ---------------------------------------------------------------

def _entry_line(entry: DeltaEntry, source_lines: dict) -> str:
    stmt = source_lines.get(entry.bp_id, "")
    if entry.signal:
        head = f"  [SIGNAL] {entry.signal} {entry.bp_id}: {stmt}".rstrip()
        bt = "".join(f"\n    {frame}" for frame in entry.backtrace)
        if bt:
            head += "\n    Backtrace (condensed):" + bt
        return head
    tag = "[=]" if entry.same else "[!]"
    line = f"  {tag} {entry.bp_id}: {stmt}".rstrip()
    if entry.same:
        return line
    if entry.a_values is None or entry.b_values is None:
        vals = entry.a_values if entry.b_values is None else entry.b_values
        if vals:
            rendered = ", ".join(f"{k}={v}" for k, v in sorted(vals.items()))
            line += f" ({rendered})"
        return line
    diffs = sorted(set(entry.a_values) | set(entry.b_values))
    parts = [f"{name}: a={entry.a_values.get(name, '<absent>')}, "
             f"b={entry.b_values.get(name, '<absent>')}"
             for name in diffs
             if entry.a_values.get(name) != entry.b_values.get(name)]
    return line + "\n  (" + "; ".join(parts) + ")"


def _render_block(block: DeltaBlock, source_lines: dict) -> str:
    header = f"[Block: {block.kind.value}] ({len(block.entries)} breakpoints)"
    entries = block.entries
    lines = [header]
    if block.kind == DeltaKind.DiffVars:
        # every differing entry shown; runs of same-valued entries elided
        run: list = []

        def flush_run():
            nonlocal run
            if len(run) <= ELISION_HEAD + ELISION_TAIL:
                lines.extend(_entry_line(e, source_lines) for e in run)
            else:
                lines.extend(_entry_line(e, source_lines) for e in run[:ELISION_HEAD])
                omitted = len(run) - ELISION_HEAD - ELISION_TAIL
                lines.append(f"  ... ({omitted} same_var breakpoints omitted)")
                lines.extend(_entry_line(e, source_lines) for e in run[-ELISION_TAIL:])
            run = []

        for entry in entries:
            if entry.same:
                run.append(entry)
            else:
                flush_run()
                lines.append(_entry_line(entry, source_lines))
        flush_run()
    elif len(entries) > ELISION_HEAD + ELISION_TAIL:
        lines.extend(_entry_line(e, source_lines) for e in entries[:ELISION_HEAD])
        omitted = len(entries) - ELISION_HEAD - ELISION_TAIL
        lines.append(f"  ... ({omitted} breakpoints omitted)")
        lines.extend(_entry_line(e, source_lines) for e in entries[-ELISION_TAIL:])
    else:
        lines.extend(_entry_line(e, source_lines) for e in entries)
    return "\n".join(lines)


def render_delta(delta: SemanticDelta, source_lines: dict | None = None) -> str:
    """Prompt-ready text in the divergence-window layout; source_lines maps
    site id -> statement text."""
    if delta.empty:
        return "no divergence"
    source_lines = source_lines or {}
    out = ["Divergence windows (ordered by first divergence per call):"]
    for label, blocks in delta.calls:
        interesting = [b for b in blocks if b.kind != DeltaKind.AllSame]
        if not interesting:
            continue
        out.append(label)
        out.append("")
        for block in blocks:
            out.append(_render_block(block, source_lines))
            out.append("")
    return "\n".join(out).rstrip() + "\n"


def delta_to_json(delta: SemanticDelta) -> str:
    doc = {
        "function": delta.function,
        "first_divergence": list(delta.first_divergence)
        if delta.first_divergence else None,
        "calls": [
            {
                "label": label,
                "blocks": [
                    {
                        "kind": block.kind.name,
                        "anchor": block.anchor,
                        "entries": [
                            {
                                "bp": e.bp_id,
                                "a": e.a_values,
                                "b": e.b_values,
                                "signal": e.signal or None,
                            }
                            for e in block.entries
                        ],
                    }
                    for block in blocks
                ],
            }
            for label, blocks in delta.calls
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


# --- sanitizer reports -------------------------------------------------------

_SAN_HEAD = re.compile(
    r"ERROR: AddressSanitizer: ([\w-]+) on address (0x[0-9a-f]+)")
_SAN_ACCESS = re.compile(r"(READ|WRITE) of size (\d+)")
_SAN_FRAME = re.compile(r"#\d+ 0x[0-9a-f]+ in (\S+) (\S+?):(\d+)")


def parse_san_report(stderr_log: str, substitute_sources=()) -> SanReport | None:
    """Extract the violation kind, access, and the top frame inside the
    substitute's source. No report -> None; a report that never touches the
    substitute raises UnresolvableFrame (asymmetric instrumentation means
    checks only fire there)."""
    head = _SAN_HEAD.search(stderr_log)
    if head is None:
        return None
    kind = head.group(1)
    access = {}
    acc = _SAN_ACCESS.search(stderr_log, head.start())
    if acc:
        access = {"op": acc.group(1), "size": int(acc.group(2))}
    names = {Path(s).name for s in substitute_sources}
    frame = None
    for m in _SAN_FRAME.finditer(stderr_log):
        fname = Path(m.group(2)).name
        if not names or fname in names:
            frame = f"{m.group(2)}:{m.group(3)}"
            break
    if frame is None:
        raise UnresolvableFrame(
            f"{kind}: no frame resolves into the substitute sources")
    shadow_idx = stderr_log.find("Shadow bytes around")
    shadow = stderr_log[shadow_idx:shadow_idx + 800] if shadow_idx >= 0 else ""
    return SanReport(violation_kind=kind, access=access,
                     faulting_frame=frame, shadow_context=shadow)


def render_san_report(report: SanReport) -> str:
    access = ""
    if report.access:
        access = f"{report.access['op']} of size {report.access['size']} "
    return (f"AddressSanitizer: {report.violation_kind} {access}"
            f"at {report.faulting_frame}\n"
            + (report.shadow_context + "\n" if report.shadow_context else ""))


# --- runtime repair loop -----------------------------------------------------

@dataclass
class RuntimeEvaluation:
    """One round of testing the current module: which tests fail and why."""
    failing: tuple             # test ids
    passing: tuple
    evidence: object = None    # SanReport | SemanticDelta | None
    source_lines: dict = field(default_factory=dict)


@dataclass
class RuntimeRepairOutcome:
    ok: bool
    iterations: int
    rollbacks: int
    final_failing: tuple


def build_runtime_prompt(unit_path, evidence, source_excerpt: str,
                         struct_defs: str, source_lines: dict) -> str:
    template = (PROMPT_DIR / "runtime_fix.txt").read_text()
    rules = (PROMPT_DIR / "patch_rules.txt").read_text()
    if isinstance(evidence, SanReport):
        summary = render_san_report(evidence)
    elif isinstance(evidence, SemanticDelta):
        summary = render_delta(evidence, source_lines)
    else:
        summary = "no structured evidence; tests failed by output mismatch"
    prompt = fill_template(
        template,
        failures_summary=summary.rstrip(),
        file_path=str(unit_path),
        source_excerpt=source_excerpt,
        struct_defs=struct_defs or "(none)")
    return prompt + "\n" + fill_template(rules, file_path=str(unit_path))


def repair_runtime(unit_path, client, evaluate, budget: RepairBudget | None = None,
                   options: CompileOptions | None = None,
                   compile_client=None, source_excerpt: str = "",
                   struct_defs: str = "") -> RuntimeRepairOutcome:
    """Bounded runtime repair: prompt from the current evidence (a sanitizer
    report preempts the breakpoint delta), patch, recompile — re-entering the
    compile loop when a patch breaks the build — and re-run the tests.

    ``evaluate()`` rebuilds the module's run artifacts and returns a
    RuntimeEvaluation. Iterations that regress previously passing tests are
    rolled back, never persisted.
    """
    budget = budget or RepairBudget()
    options = options or CompileOptions()
    unit_path = Path(unit_path)

    state = evaluate()
    if not state.failing:
        return RuntimeRepairOutcome(True, 0, 0, ())
    baseline_passing = set(state.passing)
    rollbacks = 0

    for index in range(1, budget.runtime_iters_max + 1):
        snapshot = unit_path.read_text()
        prompt = build_runtime_prompt(unit_path, state.evidence,
                                      source_excerpt or snapshot,
                                      struct_defs, state.source_lines)
        response = client.generate(prompt)
        try:
            blocks = parse_patch_blocks(response)
        except NoBlocksFound:
            continue
        source = snapshot
        applied = 0
        for block in blocks:
            if Path(block.file).name != unit_path.name:
                continue
            try:
                source = apply_patch(source, block)
                applied += 1
            except SearchNotFound:
                continue
        if not applied:
            continue
        unit_path.write_text(source)

        result = compile_unit(unit_path, options)
        if not result.ok:
            if compile_client is not None:
                try:
                    repair_compile(unit_path, compile_client, budget, options)
                except BudgetExhausted:
                    unit_path.write_text(snapshot)
                    rollbacks += 1
                    continue
            else:
                unit_path.write_text(snapshot)
                rollbacks += 1
                continue

        new_state = evaluate()
        regressed = baseline_passing & set(new_state.failing)
        if regressed:
            unit_path.write_text(snapshot)
            evaluate()      # restore artifacts to the snapshot's build
            rollbacks += 1
            continue
        state = new_state
        baseline_passing |= set(state.passing)
        if not state.failing:
            return RuntimeRepairOutcome(True, index, rollbacks, ())
    raise BudgetExhausted(RuntimeRepairOutcome(False, budget.runtime_iters_max,
                                               rollbacks, tuple(state.failing)))
