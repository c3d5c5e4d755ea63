"""Shared-module compilation and the bounded compile-repair loop.

Compiles function units into position-independent shared modules, parses
GNU-style compiler diagnostics into structured records, and iterates the
patch-generation loop (SEARCH/REPLACE blocks against the unit file) until
the unit compiles or the budget runs out.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import subprocess
import time
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BudgetExhausted,
    CompilerNotFound,
    CompileTimeout,
    NoBlocksFound,
    SearchNotFound,
)

log = logging.getLogger(__name__)

PROMPT_DIR = Path(__file__).parent / "prompts"

SNIPPET_CONTEXT = 3        # lines of context captured around a diagnostic
ERROR_WINDOW = 15          # ± lines of source shown around errors in prompts


class DiagKind(enum.Enum):
    Error = "Error"
    Warning = "Warning"


@dataclass(frozen=True)
class DiagnosticRecord:
    kind: DiagKind
    file: str
    line: int          # 1-based
    column: int        # 1-based
    span_text: str
    snippet: str
    message: str


@dataclass(frozen=True)
class PatchBlock:
    file: str
    search_text: str
    replace_text: str


@dataclass(frozen=True)
class RepairBudget:
    compile_iters_max: int = 5
    runtime_iters_max: int = 3


@dataclass
class CompileOptions:
    cc: str = "g++"
    base_flags: tuple = ("-shared", "-fPIC", "-g")
    optimize: str = "-O0"
    sanitize: bool = False
    include_dirs: tuple = ()
    extra_flags: tuple = ()
    timeout: float = 60.0

    def argv(self, source, output) -> list:
        args = [self.cc, *self.base_flags, self.optimize]
        if self.sanitize:
            args.append("-fsanitize=address")
        for inc in self.include_dirs:
            args.append(f"-I{inc}")
        args.extend(self.extra_flags)
        args.extend(["-o", str(output), str(source)])
        return args


@dataclass
class CompileResult:
    ok: bool
    module_path: Path | None
    diagnostics: list
    raw_output: str


# --- compilation -------------------------------------------------------------

def compile_unit(unit_path, options: CompileOptions | None = None,
                 output=None) -> CompileResult:
    """Compile one unit file into a shared module; on failure return parsed
    diagnostics instead."""
    options = options or CompileOptions()
    unit_path = Path(unit_path)
    output = Path(output) if output else unit_path.with_suffix(".so")
    argv = options.argv(unit_path, output)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True,
                              timeout=options.timeout)
    except FileNotFoundError as exc:
        raise CompilerNotFound(options.cc) from exc
    except subprocess.TimeoutExpired as exc:
        raise CompileTimeout(f"{options.cc} exceeded {options.timeout}s") from exc
    raw = proc.stderr + proc.stdout
    if proc.returncode == 0 and output.exists():
        return CompileResult(True, output, parse_diagnostics(
            raw, {str(unit_path): unit_path.read_text()}), raw)
    diags = parse_diagnostics(raw, {str(unit_path): unit_path.read_text()})
    return CompileResult(False, None, diags, raw)


_DIAG = re.compile(
    r"^(?P<file>[^:\s][^:\n]*):(?P<line>\d+):(?P<col>\d+):\s+"
    r"(?P<kind>fatal error|error|warning|note):\s+(?P<msg>.*)$")


def _snippet(text: str, line: int, context: int = SNIPPET_CONTEXT) -> tuple:
    lines = text.splitlines()
    if not 1 <= line <= len(lines):
        return "", ""
    lo = max(0, line - 1 - context)
    hi = min(len(lines), line + context)
    return lines[line - 1], "\n".join(lines[lo:hi])


def parse_diagnostics(raw_compiler_output: str, sources=None,
                      trailer=None) -> list:
    """Structured records from GNU-style ``file:line:col: kind: message``
    output. Follow-up note lines fold into the preceding record's message;
    unparseable lines are appended to ``trailer`` when a list is given."""
    sources = sources or {}
    records = []
    pending_extra = []

    def flush():
        nonlocal pending_extra
        if records and pending_extra:
            last = records[-1]
            records[-1] = DiagnosticRecord(
                last.kind, last.file, last.line, last.column, last.span_text,
                last.snippet, last.message + "\n" + "\n".join(pending_extra))
        pending_extra = []

    for line in raw_compiler_output.splitlines():
        m = _DIAG.match(line)
        if m is None:
            if records:
                pending_extra.append(line)
            elif trailer is not None and line.strip():
                trailer.append(line)
            continue
        kind_s = m.group("kind")
        if kind_s == "note":
            pending_extra.append(line)
            continue
        flush()
        file, lineno, col = m.group("file"), int(m.group("line")), int(m.group("col"))
        src = sources.get(file)
        if src is None:
            p = Path(file)
            src = p.read_text() if p.exists() else ""
        span, snip = _snippet(src, lineno)
        records.append(DiagnosticRecord(
            kind=DiagKind.Error if "error" in kind_s else DiagKind.Warning,
            file=file, line=lineno, column=col,
            span_text=span, snippet=snip, message=m.group("msg")))
    flush()
    return records


# --- SEARCH/REPLACE patch blocks ---------------------------------------------

_SEARCH = "<<<<<<< SEARCH"
_DIVIDE = "======="
_REPLACE = ">>>>>>> REPLACE"


def parse_patch_blocks(response: str) -> list:
    """Blocks in order of appearance; malformed blocks are skipped with a
    warning. Zero well-formed blocks raises NoBlocksFound."""
    lines = response.splitlines()
    blocks = []
    i = 0
    while i < len(lines):
        if lines[i].strip() != _SEARCH:
            i += 1
            continue
        # the path sits on its own line above, optionally above a code fence
        file = None
        j = i - 1
        while j >= 0 and file is None:
            cand = lines[j].strip()
            j -= 1
            if not cand or cand.startswith("```"):
                continue
            file = cand
        search, replace = [], []
        k = i + 1
        bucket = search
        ok = False
        while k < len(lines):
            stripped = lines[k].strip()
            if stripped == _DIVIDE and bucket is search:
                bucket = replace
            elif stripped == _REPLACE:
                ok = bucket is replace
                break
            elif stripped == _SEARCH:
                break  # next block started without finishing this one
            else:
                bucket.append(lines[k])
            k += 1
        if ok and file and search:
            blocks.append(PatchBlock(file=file,
                                     search_text="\n".join(search),
                                     replace_text="\n".join(replace)))
            i = k + 1
        else:
            log.warning("skipping malformed patch block near line %d", i + 1)
            i = k if k > i else i + 1
    if not blocks:
        raise NoBlocksFound("response contains no well-formed patch blocks")
    return blocks


def apply_patch(file_text: str, block: PatchBlock) -> str:
    """Replace the first occurrence of the search text verbatim."""
    idx = file_text.find(block.search_text)
    if idx < 0:
        raise SearchNotFound(block.search_text[:80])
    return (file_text[:idx] + block.replace_text
            + file_text[idx + len(block.search_text):])


# --- patch clients -----------------------------------------------------------

def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode()).hexdigest()[:16]


class ScriptedOracle:
    """Deterministic client: exact fingerprint lookup first, then the first
    (sorted) key occurring as a substring of the prompt."""

    def __init__(self, responses: dict):
        self.responses = dict(responses)
        self.calls = []

    def generate(self, prompt: str) -> str:
        self.calls.append(prompt)
        fp = prompt_fingerprint(prompt)
        if fp in self.responses:
            return self.responses[fp]
        for key in sorted(self.responses):
            if key in prompt:
                return self.responses[key]
        return ""


class RecordedReplay:
    """Replays a recorded response stream in order (for regression runs)."""

    def __init__(self, responses):
        self._responses = list(responses)
        self._i = 0

    @classmethod
    def from_log_dir(cls, log_dir):
        paths = sorted(Path(log_dir).glob("response_*.json"))
        return cls(json.loads(p.read_text())["text"] for p in paths)

    def generate(self, prompt: str) -> str:
        if self._i >= len(self._responses):
            return ""
        resp = self._responses[self._i]
        self._i += 1
        return resp


class LiveApi:
    """Chat-completion client over HTTPS; disabled in tests.

    Requests and responses are logged to the run directory so a later
    RecordedReplay run can reproduce the session exactly.
    """

    def __init__(self, base_url: str, api_key: str, model: str,
                 temperature: float = 0.2, top_p: float = 0.95,
                 max_tokens: int = 8192, log_dir=None, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.log_dir = Path(log_dir) if log_dir else None
        self.timeout = timeout
        self._seq = 0

    def generate(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        req = urllib.request.Request(
            self.base_url + "/chat/completions",
            data=json.dumps(body).encode(),
            headers={"Content-Type": "application/json",
                     "Authorization": f"Bearer {self.api_key}"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            doc = json.loads(resp.read().decode())
        text = doc["choices"][0]["message"]["content"]
        if self.log_dir:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            stamp = f"{self._seq:04d}"
            self._seq += 1
            (self.log_dir / f"request_{stamp}.json").write_text(
                json.dumps(body, indent=2))
            (self.log_dir / f"response_{stamp}.json").write_text(
                json.dumps({"text": text}, indent=2))
        return text


# --- prompt assembly ---------------------------------------------------------

def _numbered_window(text: str, lines_of_interest, window: int = ERROR_WINDOW) -> str:
    """Line-numbered source, elided to ±window lines around each hot line."""
    lines = text.splitlines()
    keep = set()
    for n in lines_of_interest:
        keep.update(range(max(1, n - window), min(len(lines), n + window) + 1))
    if not keep:
        keep = set(range(1, len(lines) + 1))
    out = []
    prev = 0
    for n in sorted(keep):
        if prev and n != prev + 1:
            out.append("......")
        out.append(f"{n}->{lines[n - 1]}")
        prev = n
    return "\n".join(out)


def fill_template(template: str, **values) -> str:
    """Literal placeholder substitution ({name} -> value); template text may
    contain other braces (compiler output samples) untouched."""
    for name, value in values.items():
        template = template.replace("{" + name + "}", str(value))
    return template


def build_compile_prompt(unit_path, source_text: str, diagnostics, raw_output: str) -> str:
    template = (PROMPT_DIR / "compile_fix.txt").read_text()
    rules = (PROMPT_DIR / "patch_rules.txt").read_text()
    hot = [d.line for d in diagnostics if d.file == str(unit_path)] or \
          [d.line for d in diagnostics]
    prompt = fill_template(
        template,
        diagnostics=raw_output.strip(),
        file_path=str(unit_path),
        snippets=_numbered_window(source_text, hot))
    return prompt + "\n" + fill_template(rules, file_path=str(unit_path))


# --- repair loop -------------------------------------------------------------

@dataclass
class RepairIteration:
    index: int
    diag_count: int
    patch_count: int
    touched_prototypes: bool


@dataclass
class RepairOutcome:
    ok: bool
    module_path: Path | None
    iterations: list
    final_diagnostics: list


def repair_compile(unit_path, client, budget: RepairBudget | None = None,
                   options: CompileOptions | None = None) -> RepairOutcome:
    """Bounded compile-repair: prompt, patch, recompile, at most
    compile_iters_max rounds. Patches may touch prototypes and externs inside
    the unit file, but never the shared header (header edits are rejected)."""
    budget = budget or RepairBudget()
    options = options or CompileOptions()
    unit_path = Path(unit_path)

    result = compile_unit(unit_path, options)
    if result.ok:
        return RepairOutcome(True, result.module_path, [], [])

    iterations = []
    for index in range(1, budget.compile_iters_max + 1):
        source = unit_path.read_text()
        prompt = build_compile_prompt(unit_path, source, result.diagnostics,
                                      result.raw_output)
        response = client.generate(prompt)
        try:
            blocks = parse_patch_blocks(response)
        except NoBlocksFound:
            blocks = []
        body_start = source.find("{")
        applied = 0
        touched_protos = False
        for block in blocks:
            if Path(block.file).name != unit_path.name:
                log.warning("rejecting patch for %s (only the unit file is "
                            "editable)", block.file)
                continue
            try:
                pos = source.find(block.search_text)
                source = apply_patch(source, block)
            except SearchNotFound:
                log.warning("patch search text not found; skipping block")
                continue
            applied += 1
            if 0 <= pos < body_start:
                touched_protos = True
        iterations.append(RepairIteration(index, len(result.diagnostics),
                                          applied, touched_protos))
        log.info("repair iteration %d: %d diagnostics, %d patches applied",
                 index, len(result.diagnostics), applied)
        if applied:
            unit_path.write_text(source)
            result = compile_unit(unit_path, options)
            if result.ok:
                return RepairOutcome(True, result.module_path, iterations,
                                     result.diagnostics)
    raise BudgetExhausted(RepairOutcome(False, None, iterations,
                                        result.diagnostics))
