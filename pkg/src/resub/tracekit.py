"""Breakpoint planning and differential trace collection.

Aligns the compilable function source with its pseudocode statement-by-
statement (token LCS over cast-normalized statements), turns aligned
assignments into value-observation sites, resolves sites to instruction
addresses through debug line tables, drives the system debugger over its
machine interface to record per-hit variable values in a live process, and
normalizes traces for comparison.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import re
import signal
import subprocess
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import reloc
from .elffile import Elf64
from .errors import AlignmentFailed, AttachFailed, NoLineMap, TraceTimeout
from .gdbmi import MiSession

DEFAULT_HIT_CAP = 10_000
DEFAULT_ALIGNMENT_THRESHOLD = 0.8
PIDFILE_WAIT = 10.0


class SiteRole(enum.Enum):
    ValueSite = "ValueSite"
    FlowMarker = "FlowMarker"


class BinaryRole(enum.Enum):
    OriginalA = "OriginalA"
    SubstitutedB = "SubstitutedB"


@dataclass(frozen=True)
class BreakpointSite:
    id: str
    source_line: int
    pseudo_line: int
    watch_vars: tuple        # of {"name": ..., "access": ...}
    role: SiteRole


@dataclass(frozen=True)
class BreakpointPlan:
    function: str
    sites: tuple

    def to_json(self) -> str:
        doc = {
            "function": self.function,
            "sites": [
                {
                    "id": s.id,
                    "source_line": s.source_line,
                    "pseudo_line": s.pseudo_line,
                    "role": s.role.value,
                    "watch": [dict(w) for w in s.watch_vars],
                }
                for s in self.sites
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BreakpointPlan":
        doc = json.loads(text)
        sites = tuple(
            BreakpointSite(
                id=s["id"], source_line=s["source_line"],
                pseudo_line=s["pseudo_line"],
                watch_vars=tuple(dict(w) for w in s["watch"]),
                role=SiteRole(s["role"]))
            for s in doc["sites"])
        return cls(function=doc["function"], sites=sites)


@dataclass(frozen=True)
class TraceHit:
    test_id: str
    call_hash: str
    bp_id: str
    invocation_index: int
    call_depth: int
    values: dict


@dataclass(frozen=True)
class SignalEntry:
    signal: str
    bp_context: str          # last matched site id, "" if none
    backtrace: tuple         # condensed frame strings


@dataclass
class ExecutionTrace:
    binary_role: BinaryRole
    hits: list
    signals: list = field(default_factory=list)
    test_id: str = ""
    truncated: bool = False

    @property
    def uncovered(self) -> bool:
        return not self.hits and not self.signals

    def to_json(self) -> str:
        doc = {
            "binary_role": self.binary_role.value,
            "test_id": self.test_id,
            "truncated": self.truncated,
            "hits": [
                {
                    "test_id": h.test_id,
                    "call_hash": h.call_hash,
                    "bp": h.bp_id,
                    "invocation": h.invocation_index,
                    "depth": h.call_depth,
                    "values": h.values,
                }
                for h in self.hits
            ],
            "signals": [
                {"signal": s.signal, "bp_context": s.bp_context,
                 "backtrace": list(s.backtrace)}
                for s in self.signals
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExecutionTrace":
        doc = json.loads(text)
        return cls(
            binary_role=BinaryRole(doc["binary_role"]),
            test_id=doc.get("test_id", ""),
            truncated=doc.get("truncated", False),
            hits=[TraceHit(h["test_id"], h["call_hash"], h["bp"],
                           h["invocation"], h["depth"], dict(h["values"]))
                  for h in doc["hits"]],
            signals=[SignalEntry(s["signal"], s["bp_context"],
                                 tuple(s["backtrace"]))
                     for s in doc["signals"]])


# --- statement alignment -----------------------------------------------------

_CAST = re.compile(
    r"\(\s*(?:(?:unsigned|signed|const|volatile|struct|union|enum)\b[^()]*"
    r"|(?:char|short|int|long|float|double|void|_BYTE|_WORD|_DWORD|_QWORD"
    r"|__int8|__int16|__int32|__int64|[A-Za-z_]\w*_t)\b[^()]*"
    r"|[A-Za-z_]\w*\s*\*+\s*)\)")
_LINE_COMMENT = re.compile(r"//[^\n]*")


def normalize_statement(line: str) -> str:
    """Canonical key for alignment: comments and casts stripped, whitespace
    collapsed away."""
    text = _LINE_COMMENT.sub("", line)
    prev = None
    while prev != text:
        prev = text
        text = _CAST.sub("", text)
    return re.sub(r"\s+", "", text)


def extract_statements(source: str) -> list:
    """(line_number, normalized_text) for every code-bearing line."""
    out = []
    for num, line in enumerate(source.splitlines(), start=1):
        norm = normalize_statement(line)
        if not norm or norm in "{}" or norm.startswith("#"):
            continue
        out.append((num, norm))
    return out


def _lcs_pairs(a: list, b: list) -> list:
    """Indices (i, j) of an LCS over the normalized texts."""
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i][1] == b[j][1]:
                dp[i][j] = dp[i + 1][j + 1] + 1
            else:
                dp[i][j] = max(dp[i + 1][j], dp[i][j + 1])
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i][1] == b[j][1]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


_ASSIGN = re.compile(
    r"^\s*(?:(?:unsigned|signed|const|struct|union|enum)\s+)*"
    r"(?:[A-Za-z_]\w*\s+\**\s*)?([A-Za-z_]\w*)\s*=(?!=)")


# stores through a dereference or an element: the whole left-hand expression
# is the watch, re-evaluated after the store on both sides
_STORE = re.compile(
    r"^(\*[^=;{}]*?|[A-Za-z_]\w*(?:\s*\[[^;={}]*\])+)\s*=(?!=)")


def assignment_target(line: str) -> str | None:
    """The watchable left-hand side of an assignment, if any: a plain
    identifier, or the full store expression for indexed/dereferencing
    left-hand sides."""
    text = _LINE_COMMENT.sub("", line)
    m = _ASSIGN.match(text)
    if m:
        return m.group(1)
    m = _STORE.match(text.strip())
    return m.group(1).strip() if m else None




# anything whose evaluation could perturb the inferior: calls, increments,
# and assignment
_SIDE_EFFECT = re.compile(
    r"\+\+|--|[A-Za-z_]\w*\s*\(|(?<![<>!=&|^%*/+\-])=(?!=)")
_RETURN = re.compile(r"^return\b([^;]*);?\s*$")


def return_expression(line: str) -> str | None:
    """The value expression of a ``return`` statement, cast-stripped and
    debugger-evaluable, or None for bare returns and side-effecting ones.

    Returned values are where divergence surfaces when the diverging code
    itself is untrappable -- e.g. a branch body the compiler proved dead on
    one side and never emitted. Unlike a store, the expression is complete
    before the statement runs, so it is sampled at the trap itself."""
    text = _LINE_COMMENT.sub("", line).strip()
    m = _RETURN.match(text)
    if not m:
        return None
    expr = m.group(1).strip()
    prev = None
    while prev != expr:
        prev = expr
        expr = _CAST.sub("", expr).strip()
    if not expr or _SIDE_EFFECT.search(expr):
        return None
    return expr


def make_plan(compilable_src: str, pseudocode: str, function: str = "",
              threshold: float = DEFAULT_ALIGNMENT_THRESHOLD) -> BreakpointPlan:
    """One site per aligned statement: assignments become ValueSites watching
    the left-hand value, other statements FlowMarkers. Site ids carry the
    pseudocode line number (L<n>)."""
    src_lines = compilable_src.splitlines()
    a = extract_statements(compilable_src)
    b = extract_statements(pseudocode)
    pairs = _lcs_pairs(a, b)
    denom = max(len(a), len(b))
    if denom and len(pairs) / denom < threshold:
        raise AlignmentFailed(
            f"{len(pairs)}/{denom} statements aligned (< {threshold:.0%})")
    return _plan_from_pairs(a, b, pairs, src_lines, function)


def make_flow_plan(compilable_src: str, pseudocode: str,
                   function: str = "") -> BreakpointPlan:
    """Fallback when isomorphism is broken: FlowMarkers on shared lines only."""
    a = extract_statements(compilable_src)
    b = extract_statements(pseudocode)
    pairs = _lcs_pairs(a, b)
    src_lines = compilable_src.splitlines()
    plan = _plan_from_pairs(a, b, pairs, src_lines, function)
    flow = tuple(replace(s, role=SiteRole.FlowMarker, watch_vars=())
                 for s in plan.sites)
    return BreakpointPlan(function=function, sites=flow)


def _plan_from_pairs(a, b, pairs, src_lines, function) -> BreakpointPlan:
    sites = []
    seen_ids = set()
    for i, j in pairs:
        src_line, _ = a[i]
        pseudo_line, _ = b[j]
        raw = src_lines[src_line - 1]
        target = assignment_target(raw)
        site_id = f"L{pseudo_line}"
        while site_id in seen_ids:
            site_id += "'"
        seen_ids.add(site_id)
        ret = None if target else return_expression(raw)
        if target:
            sites.append(BreakpointSite(
                id=site_id, source_line=src_line, pseudo_line=pseudo_line,
                watch_vars=({"name": target, "access": "local"},),
                role=SiteRole.ValueSite))
        elif ret:
            sites.append(BreakpointSite(
                id=site_id, source_line=src_line, pseudo_line=pseudo_line,
                watch_vars=({"name": ret, "access": "return"},),
                role=SiteRole.ValueSite))
        else:
            sites.append(BreakpointSite(
                id=site_id, source_line=src_line, pseudo_line=pseudo_line,
                watch_vars=(), role=SiteRole.FlowMarker))
    sites.sort(key=lambda s: s.source_line)
    return BreakpointPlan(function=function, sites=tuple(sites))


# --- address resolution ------------------------------------------------------

def load_line_map(image_path, source_name: str) -> dict:
    """line number -> image offset, from the image's decoded line table."""
    proc = subprocess.run(["objdump", "--dwarf=decodedline", str(image_path)],
                          capture_output=True, text=True, check=True)
    elf = Elf64(image_path)
    table = {}
    for row in proc.stdout.splitlines():
        parts = row.split()
        if len(parts) < 3 or not parts[1].isdigit():
            continue
        if os.path.basename(parts[0]) != os.path.basename(source_name):
            continue
        if not parts[2].startswith("0x"):
            continue
        line, addr = int(parts[1]), int(parts[2], 16)
        offset = elf.to_image_offset(addr)
        if line not in table or offset < table[line]:
            table[line] = offset
    return table


@dataclass(frozen=True)
class ResolvedSite:
    bp_id: str
    image: str               # "host" | "module"
    offset: int
    role: SiteRole
    watch_vars: tuple


def resolve_addresses(plan: BreakpointPlan, side: BinaryRole,
                      line_map: dict) -> list:
    """Map plan sites into (bp_id, image offset) for one side. The original
    binary resolves through the pseudocode sidecar line map; the substitute
    through its own debug line table."""
    if not line_map:
        raise NoLineMap(side.value)
    image = "host" if side == BinaryRole.OriginalA else "module"
    out = []
    for site in plan.sites:
        line = (site.pseudo_line if side == BinaryRole.OriginalA
                else site.source_line)
        offset = line_map.get(line)
        if offset is None:
            continue
        out.append(ResolvedSite(site.id, image, offset, site.role,
                                site.watch_vars))
    return out


def _first_per_address(sites):
    # coalesced line-table entries can land several sites on one address;
    # only the first can be armed, the rest are unmappable on that side
    seen, out = set(), []
    for site in sites:
        if site.offset in seen:
            continue
        seen.add(site.offset)
        out.append(site)
    return out


def symmetric_resolve(plan: BreakpointPlan, map_a: dict, map_b: dict):
    """Resolve both sides and drop any site unmappable on either, so the
    armed bp_id sets are identical. Returns (sites_a, sites_b, dropped_ids)."""
    sites_a = _first_per_address(
        resolve_addresses(plan, BinaryRole.OriginalA, map_a))
    sites_b = _first_per_address(
        resolve_addresses(plan, BinaryRole.SubstitutedB, map_b))
    common = {s.bp_id for s in sites_a} & {s.bp_id for s in sites_b}
    dropped = sorted({s.id for s in plan.sites} - common)
    return ([s for s in sites_a if s.bp_id in common],
            [s for s in sites_b if s.bp_id in common],
            dropped)


# --- collection --------------------------------------------------------------

def call_hash(test_id: str, entry_index: int) -> str:
    return hashlib.sha256(f"{test_id}:{entry_index}".encode()).hexdigest()[:12]


_LIBC_FRAME = re.compile(r"libc|ld-linux|__libc|_start\b")


def condense_backtrace(frames: list, keep: int = 3) -> tuple:
    """Top non-libc frames as 'func (file:line)' strings."""
    out = []
    for fr in frames:
        if not isinstance(fr, dict):
            continue
        func = fr.get("func", "??")
        where = fr.get("fullname") or fr.get("file") or fr.get("from") or ""
        if _LIBC_FRAME.search(func) or _LIBC_FRAME.search(where):
            continue
        line = fr.get("line")
        loc = f"{os.path.basename(where)}:{line}" if line else os.path.basename(where)
        out.append(f"{func} ({loc})" if loc else func)
        if len(out) >= keep:
            break
    return tuple(out)


_INDEX_EXPR = re.compile(r"\[([^\[\]]+)\]")


def _concretize_indices(session, expr: str) -> str:
    """Replace subscript expressions with their current values. A watch like
    v5[j + 1] is sampled after stepping over the store; by then the index
    variables may already have advanced (and differently so at different
    optimization levels), so the subscripts are pinned before the step."""
    def sub(m):
        inner = m.group(1)
        if re.fullmatch(r"\s*\d+\s*", inner):
            return m.group(0)
        v = session.evaluate(inner)
        if v is not None and re.fullmatch(r"-?\d+", v):
            return f"[{v}]"
        return m.group(0)
    return _INDEX_EXPR.sub(sub, expr)


_DEREF_BY_SIZE = {1: "unsigned char", 2: "unsigned short", 4: "unsigned int"}


def _pin_store_watch(session, expr: str) -> str:
    """Rewrite a store watch into an absolute-address read. The value is
    sampled after stepping over the store, where gdb occasionally fails to
    resolve frame-relative locations; an absolute dereference never does,
    and it renders identically on both sides. Pointer-width reads print as
    hex so address masking still applies."""
    pinned = _concretize_indices(session, expr)
    addr = session.evaluate(f"(unsigned long long)&({pinned})")
    size = session.evaluate(f"sizeof({pinned})")
    if addr is None or size is None or not (addr.isdigit() and size.isdigit()):
        return pinned
    if size == "8":
        return f"*(void **){addr}"
    kind = _DEREF_BY_SIZE.get(int(size))
    return f"*({kind} *){addr}" if kind else pinned


def _wait_pidfile(path: Path, timeout: float = PIDFILE_WAIT) -> int:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            text = path.read_text().strip()
            if text:
                return int(text)
        except (OSError, ValueError):
            pass
        time.sleep(0.02)
    raise AttachFailed(f"pid file {path} never appeared")


def collect_trace(command, resolved_sites, *, host_path, entry_offset,
                  binary_role: BinaryRole, test_id: str, env,
                  function: str = "", module_path=None, cwd=None, gdb: str = "gdb",
                  timeout: float = 120.0, hit_cap: int = DEFAULT_HIT_CAP,
                  scratch=None) -> ExecutionTrace:
    """Launch the host under the relocation engine's attach barrier, install
    traps, resume, and record every hit until exit, crash, or cap.

    ``env`` must already carry the preload list (engine (+ sanitizer) and, on
    the substituted side, RESUB_MAPPING/RESUB_MODULE). The barrier variables
    are added here.
    """
    scratch = Path(scratch) if scratch else Path(host_path).parent
    pidfile = scratch / f"resub_{os.getpid()}_{int(time.time()*1e6)}.pid"
    run_env = dict(env)
    run_env["RESUB_DEBUG_WAIT"] = "1"
    run_env["RESUB_PIDFILE"] = str(pidfile)

    proc = subprocess.Popen(list(command), env=run_env, cwd=cwd,
                            stdout=subprocess.DEVNULL,
                            stderr=subprocess.DEVNULL)
    trace = ExecutionTrace(binary_role=binary_role, hits=[], test_id=test_id)
    session = None
    try:
        pid = _wait_pidfile(pidfile)
        session = MiSession(gdb=gdb)
        session.attach(pid)
        maps = Path(f"/proc/{pid}/maps").read_text()
        host_base = reloc.resolve_load_bases(
            maps, os.path.basename(str(host_path)),
            os.path.basename(str(host_path))).bin_base
        module_base = None
        if module_path and any(s.image == "module" for s in resolved_sites):
            module_base = reloc.resolve_load_bases(
                maps, os.path.basename(str(host_path)),
                os.path.basename(str(module_path))).lib_base

        by_addr = {}
        entry_addr = host_base + entry_offset
        session.break_at_address(entry_addr)
        for site in resolved_sites:
            base = host_base if site.image == "host" else module_base
            if base is None:
                continue
            addr = base + site.offset
            by_addr[addr] = site
            if addr != entry_addr:
                session.break_at_address(addr)

        # attaching stops the inferior and emits a reasonless *stopped that
        # arrives while the breakpoint commands run; if it survived into the
        # event loop it would be taken for the first live stop and leave the
        # loop permanently one stop behind the inferior
        session.async_records = [r for r in session.async_records
                                 if r.klass != "stopped"]
        os.kill(pid, signal.SIGUSR1)
        session.cont()

        deadline = time.monotonic() + timeout
        entry_count = 0
        inv_stack = []       # open invocations: (invocation_index, call_hash)
        last_bp = ""
        traps_live = True

        def remaining():
            left = deadline - time.monotonic()
            if left <= 0:
                raise TraceTimeout(f"trace exceeded {timeout}s")
            return left

        def record_values(site, concrete=None):
            values = {}
            for watch in site.watch_vars:
                name = watch["name"]
                v = session.evaluate((concrete or {}).get(name, name))
                values[name] = v if v is not None else "<unavailable>"
            return values

        def append_hit(site, values):
            if inv_stack:
                inv, chash = inv_stack[-1]
            else:
                inv, chash = 0, call_hash(test_id, 0)
            trace.hits.append(TraceHit(
                test_id=test_id, call_hash=chash, bp_id=site.bp_id,
                invocation_index=inv, call_depth=max(1, len(inv_stack)),
                values=values))

        def stop_addr(rec):
            return int(rec.results.get("frame", {}).get("addr", "0"), 16)

        # Stops are dispatched by address, not by reported reason: when a
        # statement step ends exactly on a trap, gdb reports plain
        # end-stepping-range, and when a breakpoint fires in the middle of a
        # step gdb suspends the step and quietly resumes it on the next
        # continue, surfacing a stray end-stepping-range later. Either way
        # the inferior is stopped at the site before executing it, which is
        # all that matters for recording the hit.
        while True:
            rec = session.wait_stop(remaining())
            reason = rec.results.get("reason", "")
            if reason in ("exited-normally", "exited", "exited-signalled"):
                break
            if reason == "signal-received":
                name = rec.results.get("signal-name", "?")
                if name == "SIGUSR1":      # barrier release racing the resume
                    session.cont()
                    continue
                trace.signals.append(SignalEntry(
                    signal=name, bp_context=last_bp,
                    backtrace=condense_backtrace(session.frames())))
                session.detach()
                proc.kill()
                break
            if reason not in ("breakpoint-hit", "end-stepping-range"):
                session.cont()
                continue

            addr = stop_addr(rec)
            if addr == entry_addr:
                entry_count += 1
                depth = _stack_depth(session, function)
                del inv_stack[max(0, depth - 1):]
                inv_stack.append((entry_count, call_hash(test_id, entry_count)))
                site = by_addr.get(addr)
                if site is None:           # pure bookkeeping trap
                    session.cont()
                    continue
            site = by_addr.get(addr)
            if site is None:
                session.cont()
                continue
            last_bp = site.bp_id
            if site.role == SiteRole.ValueSite and all(
                    w.get("access") == "return" for w in site.watch_vars):
                # a return's value expression is complete before the
                # statement runs: sample in place, no step needed
                append_hit(site, record_values(site))
            elif site.role == SiteRole.ValueSite:
                # the trap sits before the store: step one statement so the
                # left-hand value is observed after assignment. Indexed and
                # dereferencing watches are pinned to their pre-step address
                concrete = {w["name"]: _pin_store_watch(session, w["name"])
                            for w in site.watch_vars
                            if not re.fullmatch(r"[A-Za-z_]\w*", w["name"])}
                session.command("-exec-next")
                step = session.wait_stop(remaining())
                step_reason = step.results.get("reason", "")
                if step_reason == "signal-received":
                    append_hit(site, record_values(site, concrete))
                    trace.signals.append(SignalEntry(
                        signal=step.results.get("signal-name", "?"),
                        bp_context=site.bp_id,
                        backtrace=condense_backtrace(session.frames())))
                    session.detach()
                    proc.kill()
                    break
                append_hit(site, record_values(site, concrete))
                if step_reason.startswith("exited"):
                    break
                if stop_addr(step) in by_addr or \
                        step_reason == "breakpoint-hit":
                    # landed directly on another trap: requeue it
                    session.async_records.insert(0, step)
                    continue
            else:
                append_hit(site, {})

            if len(trace.hits) >= hit_cap and traps_live:
                trace.truncated = True
                session.command("-break-delete")
                traps_live = False
            session.cont()

        try:
            proc.wait(timeout=max(1.0, deadline - time.monotonic()))
        except subprocess.TimeoutExpired:
            proc.kill()
            raise TraceTimeout(f"host did not exit within {timeout}s")
    finally:
        if session is not None:
            session.exit()
        if proc.poll() is None:
            proc.kill()
            proc.wait()
        pidfile.unlink(missing_ok=True)
    return trace


def _stack_depth(session, function: str) -> int:
    """Number of active invocations of the target on the stack (recursion)."""
    if not function:
        return 1
    count = 0
    for fr in session.frames(64):
        if isinstance(fr, dict) and fr.get("func") == function:
            count += 1
    return max(1, count)


# --- normalization -----------------------------------------------------------

_ADDR = re.compile(r"0x[0-9a-fA-F]{5,}")
_TIMESTAMP = re.compile(r"\b\d{2}:\d{2}:\d{2}(?:\.\d+)?\b|\b1\d{9}\b")


class _PointerMasker:
    """Equal raw pointers map to equal placeholders within one trace."""

    def __init__(self):
        self.table = {}

    def mask(self, text: str) -> str:
        def repl(m):
            raw = m.group(0).lower()
            if raw not in self.table:
                self.table[raw] = f"<ptr{len(self.table) + 1}>"
            return self.table[raw]
        return _ADDR.sub(repl, text)


def normalize_trace(trace: ExecutionTrace, commutative_groups=()) -> ExecutionTrace:
    """Mask ASLR-dependent addresses to stable placeholders, canonicalize
    timestamps, and sort hits inside declared-commutative site groups.
    Idempotent; preserves hit count and bp_ids."""
    masker = _PointerMasker()
    hits = []
    for h in trace.hits:
        values = {k: _TIMESTAMP.sub("<time>", masker.mask(v))
                  for k, v in h.values.items()}
        hits.append(replace(h, values=values))

    for group in commutative_groups:
        group = set(group)
        i = 0
        while i < len(hits):
            if hits[i].bp_id not in group:
                i += 1
                continue
            j = i
            while j < len(hits) and hits[j].bp_id in group:
                j += 1
            hits[i:j] = sorted(hits[i:j],
                               key=lambda h: (h.bp_id, sorted(h.values.items())))
            i = j

    signals = [replace(s, backtrace=tuple(masker.mask(f) for f in s.backtrace))
               for s in trace.signals]
    return ExecutionTrace(binary_role=trace.binary_role, hits=hits,
                          signals=signals, test_id=trace.test_id,
                          truncated=trace.truncated)
