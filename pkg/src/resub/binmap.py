"""Host/module symbol scanning and mapping-table construction.

The mapping table binds the substitute function and its external references
(GOT slots in the shared module) to their counterparts in the host binary,
as load-base-independent image offsets.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import elffile
from .elffile import Elf64
from .errors import (
    DuplicateHostSymbol,
    MalformedImage,
    NoTargetFunction,
    StaleMappingTable,
    StrippedNoDynsym,
    TargetTooSmall,
    UnresolvedExternal,
)

# The entry patch written by the relocation engine is 16 bytes; a host
# function smaller than this cannot be hooked without overflowing it.
MIN_HOOKABLE_SIZE = 16

# Instrumentation runtimes (the asymmetric sanitizer build) are preloaded
# into the substituted process; their symbols are the loader's to resolve,
# never the host's.
LOADER_PROVIDED_PREFIXES = (
    "__asan_", "__lsan_", "__ubsan_", "__sanitizer_", "__msan_", "__tsan_",
)


class SymbolKind(enum.Enum):
    TargetFunction = "TargetFunction"
    HostFunction = "HostFunction"
    GlobalData = "GlobalData"
    ExternalCalleeSlot = "ExternalCalleeSlot"
    GlobalDataSlot = "GlobalDataSlot"


class EntryKind(enum.Enum):
    FunctionRedirect = "FunctionRedirect"
    GlobalVarBind = "GlobalVarBind"
    CalleeBind = "CalleeBind"


@dataclass(frozen=True)
class SymbolRecord:
    name: str
    offset: int
    size: int
    section: str
    kind: SymbolKind


@dataclass(frozen=True)
class MappingEntry:
    name: str
    bin_offset: int
    lib_offset: int
    kind: EntryKind


@dataclass
class MappingTable:
    target_function: str
    entries: list[MappingEntry]
    host_image_id: str = ""
    module_image_id: str = ""
    # slot names satisfied by the dynamic linker (shared library dependency
    # imported by host and module alike); informational, not serialized
    loader_resolved: tuple = field(default=(), compare=False)

    def to_json(self) -> str:
        doc = {
            "target_function": self.target_function,
            "host_image_id": self.host_image_id,
            "module_image_id": self.module_image_id,
            "entries": [
                {
                    "name": e.name,
                    "kind": e.kind.value,
                    "bin_offset": hex(e.bin_offset),
                    "lib_offset": hex(e.lib_offset),
                }
                for e in sorted(self.entries, key=lambda e: e.name)
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MappingTable":
        doc = json.loads(text)
        entries = [
            MappingEntry(
                name=e["name"],
                bin_offset=int(e["bin_offset"], 16),
                lib_offset=int(e["lib_offset"], 16),
                kind=EntryKind(e["kind"]),
            )
            for e in doc["entries"]
        ]
        return cls(
            target_function=doc["target_function"],
            entries=entries,
            host_image_id=doc.get("host_image_id", ""),
            module_image_id=doc.get("module_image_id", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "MappingTable":
        return cls.from_json(Path(path).read_text())

    def verify_images(self, host_image, module_image) -> None:
        if self.host_image_id and self.host_image_id != image_id(host_image):
            raise StaleMappingTable(f"host image changed since {host_image} was mapped")
        if self.module_image_id and self.module_image_id != image_id(module_image):
            raise StaleMappingTable(f"module image changed since {module_image} was mapped")


def image_id(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- host scan --------------------------------------------------------------

def load_sidecar_symbols(path) -> list[SymbolRecord]:
    doc = json.loads(Path(path).read_text())
    out = []
    for s in doc["symbols"]:
        out.append(
            SymbolRecord(
                name=s["name"],
                offset=int(s["offset"], 16),
                size=int(s.get("size", "0x0"), 16),
                section=s.get("section", ""),
                kind=SymbolKind(s.get("kind", "HostFunction")),
            )
        )
    return out


def scan_host_symbols(host_image, sidecar=None) -> list[SymbolRecord]:
    """One record per defined function / data object in the host image.

    Offsets are image offsets. A stripped host (no .symtab, no .dynsym)
    raises StrippedNoDynsym unless a sidecar symbol file is supplied.
    """
    elf = Elf64(host_image)
    syms = elf.symbols(".symtab") or elf.symbols(".dynsym")
    named = [s for s in syms if s.name and s.defined]
    if not named:
        if sidecar is not None:
            return load_sidecar_symbols(sidecar)
        raise StrippedNoDynsym(
            f"{host_image}: no symbol table; supply a sidecar symbol file")
    out = []
    for s in named:
        if s.type == elffile.STT_FUNC:
            kind = SymbolKind.HostFunction
        elif s.type == elffile.STT_OBJECT:
            kind = SymbolKind.GlobalData
        else:
            continue
        sec = elf.section_of_vaddr(s.value)
        out.append(
            SymbolRecord(
                name=s.name,
                offset=elf.to_image_offset(s.value),
                size=s.size,
                section=sec.name if sec else "",
                kind=kind,
            )
        )
    return out


# --- module scan ------------------------------------------------------------

def scan_module_symbols(module_image, target_fn=None) -> list[SymbolRecord]:
    """The substitute's record plus one slot record per GOT entry that
    references an undefined external symbol."""
    elf = Elf64(module_image)
    if elf.e_type != 3:  # ET_DYN
        raise MalformedImage(f"{module_image}: not a shared module")
    dynsyms = elf.dynamic_symbols()

    exported = [
        s for s in dynsyms
        if s.name and s.defined and s.type == elffile.STT_FUNC
        and s.bind != elffile.STB_WEAK
    ]
    if target_fn is not None:
        matches = [s for s in exported if s.name == target_fn]
        if not matches:
            raise NoTargetFunction(f"{module_image}: no exported {target_fn!r}")
        target = matches[0]
    else:
        if not exported:
            raise NoTargetFunction(f"{module_image}: no exported function")
        target = exported[0]

    out = [
        SymbolRecord(
            name=target.name,
            offset=elf.to_image_offset(target.value),
            size=target.size,
            section=(elf.section_of_vaddr(target.value) or elf.sections[0]).name,
            kind=SymbolKind.TargetFunction,
        )
    ]

    for rela in elf.relocations(".rela.dyn") + elf.relocations(".rela.plt"):
        if rela.type not in (elffile.R_X86_64_GLOB_DAT, elffile.R_X86_64_JUMP_SLOT):
            continue
        sym = dynsyms[rela.sym_index]
        if not sym.name or sym.defined:
            continue
        if rela.type == elffile.R_X86_64_JUMP_SLOT or sym.type == elffile.STT_FUNC:
            kind = SymbolKind.ExternalCalleeSlot
        else:
            kind = SymbolKind.GlobalDataSlot
        sec = elf.section_of_vaddr(rela.offset)
        out.append(
            SymbolRecord(
                name=sym.name,
                offset=elf.to_image_offset(rela.offset),
                size=8,
                section=sec.name if sec else "",
                kind=kind,
            )
        )
    return out


# --- table construction -----------------------------------------------------

def build_mapping_table(
    host_syms,
    module_syms,
    target_fn,
    host_dynamic_imports=None,
    host_image_id="",
    module_image_id="",
) -> MappingTable:
    """Join the two scans into the ⟨name, bin_offset, lib_offset⟩ table.

    Slot symbols the host does not define raise UnresolvedExternal, unless
    the host itself imports them dynamically (same shared-library dependency,
    satisfied identically by the loader) in which case they are recorded as
    loader-resolved and omitted from the table.
    """
    host_dynamic_imports = host_dynamic_imports or set()

    host_by_name = {}
    for rec in host_syms:
        if rec.name in host_by_name:
            raise DuplicateHostSymbol(rec.name)
        host_by_name[rec.name] = rec

    if target_fn not in host_by_name:
        raise NoTargetFunction(f"{target_fn!r} not defined in the host scan")
    host_target = host_by_name[target_fn]
    if host_target.size and host_target.size < MIN_HOOKABLE_SIZE:
        raise TargetTooSmall(
            f"{target_fn!r} is {host_target.size} bytes; "
            f"the entry patch needs {MIN_HOOKABLE_SIZE}")

    module_target = next(
        (r for r in module_syms if r.kind == SymbolKind.TargetFunction
         and r.name == target_fn), None)
    if module_target is None:
        raise NoTargetFunction(f"{target_fn!r} not defined in the module scan")

    entries = [
        MappingEntry(target_fn, host_target.offset, module_target.offset,
                     EntryKind.FunctionRedirect)
    ]
    loader_resolved = []
    for rec in module_syms:
        if rec.kind not in (SymbolKind.ExternalCalleeSlot, SymbolKind.GlobalDataSlot):
            continue
        host_def = host_by_name.get(rec.name)
        if host_def is None:
            if rec.name in host_dynamic_imports or \
                    rec.name.startswith(LOADER_PROVIDED_PREFIXES):
                loader_resolved.append(rec.name)
                continue
            raise UnresolvedExternal(rec.name)
        kind = (EntryKind.CalleeBind if rec.kind == SymbolKind.ExternalCalleeSlot
                else EntryKind.GlobalVarBind)
        entries.append(MappingEntry(rec.name, host_def.offset, rec.offset, kind))

    # names are unique within a table; identical duplicate slots collapse,
    # but the same name at two distinct slots cannot be represented
    seen = {}
    deduped = []
    for e in entries:
        prev = seen.get(e.name)
        if prev is None:
            seen[e.name] = e
            deduped.append(e)
        elif prev.lib_offset != e.lib_offset:
            raise UnresolvedExternal(
                f"{e.name} (referenced through multiple distinct slots)")

    return MappingTable(
        target_function=target_fn,
        entries=deduped,
        host_image_id=host_image_id,
        module_image_id=module_image_id,
        loader_resolved=tuple(sorted(loader_resolved)),
    )


def map_images(host_image, module_image, target_fn, sidecar=None) -> MappingTable:
    """Scan both files and build the table, stamping content hashes."""
    host_syms = scan_host_symbols(host_image, sidecar=sidecar)
    module_syms = scan_module_symbols(module_image, target_fn=target_fn)
    host_elf = Elf64(host_image)
    return build_mapping_table(
        host_syms,
        module_syms,
        target_fn,
        host_dynamic_imports=host_elf.undefined_imports(),
        host_image_id=image_id(host_image),
        module_image_id=image_id(module_image),
    )
