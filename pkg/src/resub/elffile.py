"""Minimal ELF64 little-endian reader.

Covers exactly what the mapping stage needs: section headers, symbol tables
(.symtab/.dynsym), RELA relocations and PT_LOAD program headers. Virtual
addresses are converted to *image offsets* (relative to the lowest PT_LOAD
vaddr) so everything stays load-base independent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedImage

ELF_MAGIC = b"\x7fELF"
ELFCLASS64 = 2
ELFDATA2LSB = 1

SHT_SYMTAB = 2
SHT_DYNSYM = 11
SHT_RELA = 4

STT_OBJECT = 1
STT_FUNC = 2

STB_WEAK = 2

SHN_UNDEF = 0

# x86-64 relocation types we care about
R_X86_64_GLOB_DAT = 6
R_X86_64_JUMP_SLOT = 7

PT_LOAD = 1


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    flags: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int

    def contains_vaddr(self, vaddr: int) -> bool:
        return self.addr <= vaddr < self.addr + self.size


@dataclass(frozen=True)
class Symbol:
    name: str
    value: int          # st_value (virtual address in the image)
    size: int
    bind: int
    type: int
    shndx: int

    @property
    def defined(self) -> bool:
        return self.shndx != SHN_UNDEF


@dataclass(frozen=True)
class Rela:
    offset: int         # r_offset (virtual address of the slot)
    type: int
    sym_index: int
    addend: int


class Elf64:
    """Parsed view of a 64-bit little-endian ELF file."""

    def __init__(self, path):
        self.path = str(path)
        with open(path, "rb") as fh:
            self.data = fh.read()
        if len(self.data) < 64 or self.data[:4] != ELF_MAGIC:
            raise MalformedImage(f"{self.path}: not an ELF file")
        if self.data[4] != ELFCLASS64 or self.data[5] != ELFDATA2LSB:
            raise MalformedImage(f"{self.path}: only 64-bit little-endian ELF is supported")

        (self.e_type, self.e_machine, _ver, self.e_entry, self.e_phoff,
         self.e_shoff, _flags, _ehsize, self.e_phentsize, self.e_phnum,
         self.e_shentsize, self.e_shnum, self.e_shstrndx) = struct.unpack_from(
            "<HHIQQQIHHHHHH", self.data, 16)

        self.sections = self._read_sections()
        self.load_bias = self._read_load_bias()

    # -- parsing ------------------------------------------------------------

    def _read_sections(self) -> list[Section]:
        raw = []
        for i in range(self.e_shnum):
            off = self.e_shoff + i * self.e_shentsize
            if off + 64 > len(self.data):
                raise MalformedImage(f"{self.path}: section header {i} out of range")
            (sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size,
             sh_link, _info, _align, sh_entsize) = struct.unpack_from(
                "<IIQQQQIIQQ", self.data, off)
            raw.append((sh_name, sh_type, sh_flags, sh_addr, sh_offset,
                        sh_size, sh_link, sh_entsize))
        if not raw:
            return []
        if self.e_shstrndx >= len(raw):
            raise MalformedImage(f"{self.path}: bad shstrndx")
        strtab_off = raw[self.e_shstrndx][4]
        strtab_size = raw[self.e_shstrndx][5]
        strtab = self.data[strtab_off:strtab_off + strtab_size]
        out = []
        for (name_off, sh_type, flags, addr, offset, size, link, entsize) in raw:
            out.append(Section(self._cstr(strtab, name_off), sh_type, flags,
                               addr, offset, size, link, entsize))
        return out

    def _read_load_bias(self) -> int:
        lows = []
        for i in range(self.e_phnum):
            off = self.e_phoff + i * self.e_phentsize
            p_type, _fl, _off, p_vaddr = struct.unpack_from("<IIQQ", self.data, off)
            if p_type == PT_LOAD:
                lows.append(p_vaddr)
        return min(lows) if lows else 0

    @staticmethod
    def _cstr(blob: bytes, off: int) -> str:
        end = blob.find(b"\x00", off)
        return blob[off:end].decode("utf-8", "replace")

    # -- queries ------------------------------------------------------------

    def section(self, name: str) -> Section | None:
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def section_of_vaddr(self, vaddr: int) -> Section | None:
        for s in self.sections:
            if s.addr and s.contains_vaddr(vaddr):
                return s
        return None

    def to_image_offset(self, vaddr: int) -> int:
        return vaddr - self.load_bias

    def symbols(self, table: str) -> list[Symbol]:
        sec = self.section(table)
        if sec is None or sec.entsize == 0:
            return []
        strsec = self.sections[sec.link]
        strtab = self.data[strsec.offset:strsec.offset + strsec.size]
        out = []
        for off in range(sec.offset, sec.offset + sec.size, sec.entsize):
            st_name, st_info, _other, st_shndx, st_value, st_size = struct.unpack_from(
                "<IBBHQQ", self.data, off)
            out.append(Symbol(self._cstr(strtab, st_name), st_value, st_size,
                              st_info >> 4, st_info & 0xF, st_shndx))
        return out

    def relocations(self, name: str) -> list[Rela]:
        sec = self.section(name)
        if sec is None or sec.sh_type != SHT_RELA:
            return []
        out = []
        for off in range(sec.offset, sec.offset + sec.size, 24):
            r_offset, r_info, r_addend = struct.unpack_from("<QQq", self.data, off)
            out.append(Rela(r_offset, r_info & 0xFFFFFFFF, r_info >> 32, r_addend))
        return out

    def dynamic_symbols(self) -> list[Symbol]:
        return self.symbols(".dynsym")

    def undefined_imports(self) -> set[str]:
        return {s.name for s in self.dynamic_symbols() if s.name and not s.defined}
