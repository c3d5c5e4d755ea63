"""Runtime relocation: load-base resolution, trampoline emission, in-process
hook installation and GOT patching, plus the build helper for the injectable
C engine (engine.c) used on the LD_PRELOAD path.

The in-process operations mirror what the preloaded engine does inside a
host, which keeps them directly testable from Python via ctypes.
"""

from __future__ import annotations

import ctypes
import hashlib
import os
import platform
import signal as signal_mod
import struct
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

from ..errors import (
    ImageNotMapped,
    PidFileWriteFailed,
    ProtectFailed,
    SlotWriteFailed,
    UnsupportedArch,
)

DEFAULT_CELL_ADDRESS = 0xBABE0000
# The default sits inside AddressSanitizer's shadow gap; sanitized runs place
# the cell page in high memory instead, clear of both shadow regions and the
# usual mmap/stack neighborhoods.
SANITIZER_SAFE_CELL_ADDRESS = 0x20000BABE000
RESUME_SIGNAL = signal_mod.SIGUSR1

PROT_READ = 1
PROT_WRITE = 2
PROT_EXEC = 4

_MAP_PRIVATE = 0x02
_MAP_ANONYMOUS = 0x20
_MAP_FIXED_NOREPLACE = 0x100000

_libc = ctypes.CDLL(None, use_errno=True)
_libc.mmap.restype = ctypes.c_void_p
_libc.mmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int,
                       ctypes.c_int, ctypes.c_int, ctypes.c_long]
_libc.mprotect.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int]

PAGE = 4096


@dataclass(frozen=True)
class LoadBases:
    bin_base: int
    lib_base: int


@dataclass(frozen=True)
class Trampoline:
    cell_address: int
    code_bytes: bytes
    patch_length: int


@dataclass(frozen=True)
class PagePatchRecord:
    page_start: int
    original_protection: int
    bytes_saved: bytes
    patch_address: int


# --- process map parsing ----------------------------------------------------

@dataclass(frozen=True)
class MapRegion:
    start: int
    end: int
    perms: str
    path: str

    @property
    def prot(self) -> int:
        p = 0
        if "r" in self.perms[:1]:
            p |= PROT_READ
        if "w" in self.perms[1:2]:
            p |= PROT_WRITE
        if "x" in self.perms[2:3]:
            p |= PROT_EXEC
        return p


def parse_maps(text: str) -> list[MapRegion]:
    regions = []
    for line in text.splitlines():
        parts = line.split(maxsplit=5)
        if len(parts) < 5:
            continue
        span, perms = parts[0], parts[1]
        path = parts[5] if len(parts) == 6 else ""
        start_s, end_s = span.split("-")
        regions.append(MapRegion(int(start_s, 16), int(end_s, 16), perms, path))
    return regions


def _matches(path: str, name: str) -> bool:
    return bool(path) and (path == name or path.endswith("/" + name)
                           or os.path.basename(path) == name)


def resolve_load_bases(maps_snapshot: str, host_name: str, module_name: str) -> LoadBases:
    """Lowest mapped address of each named image in a /proc/<pid>/maps dump."""
    bases = {}
    for region in parse_maps(maps_snapshot):
        for name in (host_name, module_name):
            if _matches(region.path, name):
                bases[name] = min(bases.get(name, region.start), region.start)
    for name in (host_name, module_name):
        if name not in bases:
            raise ImageNotMapped(name)
    return LoadBases(bin_base=bases[host_name], lib_base=bases[module_name])


def self_maps() -> str:
    return Path("/proc/self/maps").read_text()


def region_of(addr: int, maps_text: str | None = None) -> MapRegion | None:
    for region in parse_maps(maps_text if maps_text is not None else self_maps()):
        if region.start <= addr < region.end:
            return region
    return None


# --- trampoline -------------------------------------------------------------

def emit_trampoline(cell_address: int, substitute_va: int) -> Trampoline:
    """x86-64 entry patch: push %rax; movabs cell,%rax; xchg %rax,(%rsp); ret.

    Loads the 64-bit callee pointer stored at ``cell_address`` and tail-jumps
    to it, preserving every register (including %al for variadic targets).
    """
    if platform.machine() != "x86_64":
        raise UnsupportedArch(platform.machine())
    for value in (cell_address, substitute_va):
        if not 0 <= value < 2**64:
            raise UnsupportedArch(f"address {value:#x} does not fit in 64 bits")
    code = (b"\x50"                                    # push %rax
            + b"\x48\xa1" + struct.pack("<Q", cell_address)  # movabs cell,%rax
            + b"\x48\x87\x04\x24"                      # xchg %rax,(%rsp)
            + b"\xc3")                                 # ret
    assert len(code) <= 32
    return Trampoline(cell_address=cell_address, code_bytes=code,
                      patch_length=len(code))


# --- in-process memory operations ------------------------------------------

def _mprotect_retry(page_start: int, length: int, prot: int,
                    attempts: int = 5, first_delay: float = 0.001) -> None:
    delay = first_delay
    for i in range(attempts):
        if _libc.mprotect(ctypes.c_void_p(page_start), length, prot) == 0:
            return
        if i + 1 < attempts:
            time.sleep(delay)
            delay *= 2
    raise ProtectFailed(f"mprotect({page_start:#x}, {length}, {prot}) failed "
                        f"after {attempts} attempts")


def _span_pages(addr: int, length: int) -> tuple[int, int]:
    page_start = addr & ~(PAGE - 1)
    span = (addr + length - page_start + PAGE - 1) // PAGE * PAGE
    return page_start, span


def map_cell_page(cell_address: int = DEFAULT_CELL_ADDRESS) -> int:
    """Map the dedicated pointer-cell page at its fixed address (idempotent)."""
    existing = region_of(cell_address)
    if existing is not None:
        return cell_address
    res = _libc.mmap(ctypes.c_void_p(cell_address), PAGE,
                     PROT_READ | PROT_WRITE,
                     _MAP_PRIVATE | _MAP_ANONYMOUS | _MAP_FIXED_NOREPLACE, -1, 0)
    if res is None or res != cell_address:
        raise ProtectFailed(f"could not map cell page at {cell_address:#x}")
    return cell_address


def write_cell(cell_address: int, substitute_va: int) -> None:
    ctypes.memmove(cell_address, struct.pack("<Q", substitute_va), 8)


def read_mem(addr: int, length: int) -> bytes:
    return ctypes.string_at(addr, length)


def install_hook(entry_va: int, trampoline: Trampoline) -> PagePatchRecord:
    """Overwrite the function entry with the trampoline, preserving the page's
    protection; returns the record needed to undo."""
    region = region_of(entry_va)
    if region is None or "x" not in region.perms:
        raise ProtectFailed(f"{entry_va:#x} is not in a mapped executable region")
    original_prot = region.prot
    page_start, span = _span_pages(entry_va, trampoline.patch_length)
    saved = read_mem(entry_va, trampoline.patch_length)
    _mprotect_retry(page_start, span, PROT_READ | PROT_WRITE | PROT_EXEC)
    try:
        ctypes.memmove(entry_va, trampoline.code_bytes, trampoline.patch_length)
    finally:
        _mprotect_retry(page_start, span, original_prot)
    return PagePatchRecord(page_start=page_start,
                           original_protection=original_prot,
                           bytes_saved=saved,
                           patch_address=entry_va)


def undo_hook(record: PagePatchRecord) -> None:
    page_start, span = _span_pages(record.patch_address, len(record.bytes_saved))
    _mprotect_retry(page_start, span, PROT_READ | PROT_WRITE | PROT_EXEC)
    try:
        ctypes.memmove(record.patch_address, record.bytes_saved,
                       len(record.bytes_saved))
    finally:
        _mprotect_retry(page_start, span, record.original_protection)


def patch_got(table, bases: LoadBases, host_image=None, module_image=None) -> int:
    """Write host virtual addresses into the module's bind slots.

    FunctionRedirect entries are handled by install_hook, not here. When the
    image paths are supplied, the table's content hashes are verified first.
    """
    from ..binmap import EntryKind  # local import to avoid a cycle

    if host_image is not None or module_image is not None:
        table.verify_images(host_image, module_image)

    count = 0
    for entry in table.entries:
        if entry.kind == EntryKind.FunctionRedirect:
            continue
        slot = bases.lib_base + entry.lib_offset
        value = bases.bin_base + entry.bin_offset
        region = region_of(slot)
        if region is None:
            raise SlotWriteFailed(entry.name)
        page_start, span = _span_pages(slot, 8)
        try:
            _mprotect_retry(page_start, span, PROT_READ | PROT_WRITE)
            ctypes.memmove(slot, struct.pack("<Q", value), 8)
            _mprotect_retry(page_start, span, region.prot)
        except ProtectFailed as exc:
            raise SlotWriteFailed(entry.name) from exc
        count += 1
    return count


def install_redirect(table, bases: LoadBases,
                     cell_address: int = DEFAULT_CELL_ADDRESS,
                     host_image=None, module_image=None) -> PagePatchRecord:
    """Full in-process installation: cell page, cell value, GOT, entry hook.

    The substitute must never be reachable before its external bindings are
    live, hence this exact order.
    """
    from ..binmap import EntryKind

    redirect = next(e for e in table.entries
                    if e.kind == EntryKind.FunctionRedirect)
    map_cell_page(cell_address)
    write_cell(cell_address, bases.lib_base + redirect.lib_offset)
    patch_got(table, bases, host_image=host_image, module_image=module_image)
    tramp = emit_trampoline(cell_address, bases.lib_base + redirect.lib_offset)
    return install_hook(bases.bin_base + redirect.bin_offset, tramp)


# --- debug barrier ----------------------------------------------------------

def debug_barrier(pid_file, resume_signal: int = RESUME_SIGNAL) -> None:
    """Write our pid, then pause until the resume signal arrives.

    An unwritable pid file degrades to a logged skip (barrier off) rather
    than blocking a process nobody can find.
    """
    resumed = {"flag": False}

    def _handler(signum, frame):
        resumed["flag"] = True

    previous = signal_mod.signal(resume_signal, _handler)
    try:
        try:
            Path(pid_file).write_text(f"{os.getpid()}\n")
        except OSError as exc:
            raise PidFileWriteFailed(str(exc)) from exc
        while not resumed["flag"]:
            signal_mod.pause()
    finally:
        signal_mod.signal(resume_signal, previous)


# --- engine build -----------------------------------------------------------

ENGINE_SOURCE = Path(__file__).with_name("engine.c")


def build_engine(build_dir, cc: str = "cc") -> Path:
    """Compile the preload engine, cached by source hash."""
    build_dir = Path(build_dir)
    build_dir.mkdir(parents=True, exist_ok=True)
    src = ENGINE_SOURCE.read_bytes()
    tag = hashlib.sha256(src).hexdigest()[:16]
    out = build_dir / f"resub_engine_{tag}.so"
    if out.exists():
        return out
    tmp = out.with_suffix(".tmp.so")
    subprocess.run(
        [cc, "-shared", "-fPIC", "-O2", "-o", str(tmp), str(ENGINE_SOURCE), "-ldl"],
        check=True, capture_output=True)
    os.replace(tmp, out)
    return out
