"""Minimal driver for the GNU debugger's machine interface (MI).

Runs one ``gdb --interpreter=mi3`` subprocess, sends token-numbered commands,
and parses result / async records into Python dicts. Only the small MI
surface the tracer needs is covered: attach, address breakpoints, continue,
expression evaluation, stack frames, detach.
"""

from __future__ import annotations

import queue
import subprocess
import threading
from dataclasses import dataclass, field

from .errors import AttachFailed, TraceTimeout


# --- MI output grammar -------------------------------------------------------

def _parse_cstring(text: str, i: int):
    assert text[i] == '"'
    i += 1
    out = []
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            nxt = text[i + 1]
            out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            i += 2
        elif ch == '"':
            return "".join(out), i + 1
        else:
            out.append(ch)
            i += 1
    raise ValueError("unterminated MI string")


def _parse_value(text: str, i: int):
    ch = text[i]
    if ch == '"':
        return _parse_cstring(text, i)
    if ch == "{":
        return _parse_tuple(text, i + 1, "}")
    if ch == "[":
        return _parse_list(text, i + 1)
    raise ValueError(f"unexpected MI value at {text[i:i+20]!r}")


def _parse_tuple(text: str, i: int, closer: str):
    result = {}
    while i < len(text) and text[i] != closer:
        j = text.index("=", i)
        key = text[i:j]
        value, i = _parse_value(text, j + 1)
        # repeated keys (e.g. several frame=) collect into a list
        if key in result:
            prev = result[key]
            result[key] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            result[key] = value
        if i < len(text) and text[i] == ",":
            i += 1
    return result, i + 1


def _parse_list(text: str, i: int):
    items = []
    while i < len(text) and text[i] != "]":
        if text[i] not in '"{[':
            # list of named results: name=value pairs
            j = text.index("=", i)
            value, i = _parse_value(text, j + 1)
            items.append(value)
        else:
            value, i = _parse_value(text, i)
            items.append(value)
        if i < len(text) and text[i] == ",":
            i += 1
    return items, i + 1


@dataclass
class MiRecord:
    token: str          # "" when absent
    type: str           # "^", "*", "=", "~", "&", "@"
    klass: str          # done / error / stopped / running / ...
    results: dict = field(default_factory=dict)
    raw: str = ""


def parse_record(line: str) -> MiRecord | None:
    line = line.rstrip()
    if not line or line == "(gdb)":
        return None
    i = 0
    while i < len(line) and line[i].isdigit():
        i += 1
    token, rest = line[:i], line[i:]
    if not rest:
        return None
    kind = rest[0]
    if kind in "~&@":
        return MiRecord(token, kind, "", {}, raw=rest[1:])
    if kind not in "^*=":
        return MiRecord(token, "?", "", {}, raw=line)
    body = rest[1:]
    comma = body.find(",")
    if comma < 0:
        return MiRecord(token, kind, body, {}, raw=line)
    klass = body[:comma]
    results, _ = _parse_tuple(body + ",", comma + 1, "\0")
    return MiRecord(token, kind, klass, results, raw=line)


# --- session -----------------------------------------------------------------

class MiSession:
    """One MI subprocess; synchronous command/response with async draining."""

    def __init__(self, gdb: str = "gdb", extra_args=()):
        self._proc = subprocess.Popen(
            [gdb, "--interpreter=mi3", "--nx", "-q", *extra_args],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, bufsize=1)
        self._queue: queue.Queue = queue.Queue()
        self._token = 0
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self.async_records: list = []

    def _pump(self):
        for line in self._proc.stdout:
            rec = parse_record(line)
            if rec is not None:
                self._queue.put(rec)
        self._queue.put(None)

    def _next(self, timeout: float) -> MiRecord:
        try:
            rec = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TraceTimeout(f"no MI output within {timeout}s") from None
        if rec is None:
            raise TraceTimeout("debugger exited unexpectedly")
        return rec

    def command(self, cmd: str, timeout: float = 30.0) -> MiRecord:
        """Send one MI command; return its result record (^...)."""
        self._token += 1
        token = str(self._token)
        self._proc.stdin.write(f"{token}{cmd}\n")
        self._proc.stdin.flush()
        while True:
            rec = self._next(timeout)
            if rec.type == "^" and (rec.token == token or not rec.token):
                return rec
            if rec.type in "*=":
                self.async_records.append(rec)

    def wait_async(self, klass: str, timeout: float) -> MiRecord:
        """Block until an async record of the given class (e.g. 'stopped')."""
        for i, rec in enumerate(self.async_records):
            if rec.klass == klass:
                return self.async_records.pop(i)
        while True:
            rec = self._next(timeout)
            if rec.type in "*=":
                if rec.klass == klass:
                    return rec
                self.async_records.append(rec)

    # -- convenience wrappers --

    def attach(self, pid: int, timeout: float = 30.0) -> None:
        rec = self.command(f"-target-attach {pid}", timeout)
        if rec.klass == "error":
            raise AttachFailed(rec.results.get("msg", rec.raw))

    def break_at_address(self, address: int) -> str:
        rec = self.command(f"-break-insert *{address:#x}")
        if rec.klass == "error":
            raise AttachFailed(rec.results.get("msg", rec.raw))
        return rec.results["bkpt"]["number"]

    def cont(self) -> None:
        self.command("-exec-continue")

    def wait_stop(self, timeout: float) -> MiRecord:
        return self.wait_async("stopped", timeout)

    def evaluate(self, expr: str) -> str | None:
        quoted = expr.replace("\\", "\\\\").replace('"', '\\"')
        rec = self.command(f'-data-evaluate-expression "{quoted}"')
        if rec.klass == "error":
            return None
        return rec.results.get("value")

    def frames(self, limit: int = 16) -> list:
        rec = self.command(f"-stack-list-frames 0 {limit}")
        if rec.klass == "error":
            return []
        stack = rec.results.get("stack", [])
        return stack if isinstance(stack, list) else [stack]

    def detach(self) -> None:
        try:
            self.command("-target-detach", timeout=5.0)
        except TraceTimeout:
            pass

    def exit(self) -> None:
        try:
            self._proc.stdin.write("-gdb-exit\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError):
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.exit()
