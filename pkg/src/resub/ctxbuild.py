"""Compilation-context reconstruction for decompiler pseudocode.

Parses a corpus of one-function-per-file pseudocode plus a type listing,
builds the type dependency graph, emits a dependency-safe unified header,
and assembles self-contained function units (header + externs + callee
prototypes + body) ready for shared-module compilation.

The parser covers a restricted C declaration grammar (decompiler output is
syntactically regular); it is not a C front end. Units are compiled as C++
(struct tags double as type names), with externs wrapped in extern "C".
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CyclicByValueDependency,
    MissingCalleePrototype,
    ParseFailure,
    UnknownReferencedType,
)

PRIMITIVES_HEADER = Path(__file__).parent / "data" / "primitives.h"

C_KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if",
    "inline", "int", "long", "register", "restrict", "return", "short",
    "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "true", "false", "bool",
}

PRIMITIVE_TYPES = {
    "_BYTE", "_WORD", "_DWORD", "_QWORD", "_BOOL4", "_BOOL8",
    "__int8", "__int16", "__int32", "__int64",
    "__fastcall", "__cdecl", "__stdcall", "__usercall", "__noreturn", "__hidden",
    "LOBYTE", "LOWORD", "LODWORD", "HIBYTE", "HIWORD", "HIDWORD",
}

LIBC_TYPES = {
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t", "va_list",
    "int8_t", "int16_t", "int32_t", "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "FILE", "time_t", "off_t", "wchar_t",
}

DEFAULT_BUILTINS = C_KEYWORDS | PRIMITIVE_TYPES | LIBC_TYPES

_IDENT = re.compile(r"[A-Za-z_]\w*")
_CALL = re.compile(r"(?<![\w.>])([A-Za-z_]\w*)\s*\(")
_NOT_CALLS = C_KEYWORDS | {"defined", "__builtin_unreachable", "__attribute__",
                           "JUMPOUT"}


class DeclKind(enum.Enum):
    Typedef = "Typedef"
    Struct = "Struct"
    Union = "Union"
    Enum = "Enum"
    FnPtrTypedef = "FnPtrTypedef"


class DepCategory(enum.Enum):
    TypedefDep = "TypedefDep"
    FnPtrDep = "FnPtrDep"
    UdtMemberDep = "UdtMemberDep"


@dataclass(frozen=True)
class TypeDecl:
    name: str
    decl_kind: DeclKind
    body_text: str
    referenced_types: frozenset


@dataclass(frozen=True)
class DepEdge:
    src: str        # dependee: must be declared/defined first
    dst: str        # depender
    category: DepCategory


@dataclass
class TypeDepGraph:
    nodes: dict
    edges: set

    def by_value_edges(self):
        return [e for e in self.edges if e.category == DepCategory.UdtMemberDep]


@dataclass
class FunctionUnit:
    name: str
    body_text: str
    callee_prototypes: list
    global_decls: list
    header_ref: str
    flags: list = field(default_factory=list)

    @property
    def text(self) -> str:
        parts = [f'#include "{self.header_ref}"', ""]
        wrapped = self.global_decls + self.callee_prototypes
        parts.append("#ifdef __cplusplus")
        parts.append('extern "C" {')
        parts.append("#endif")
        parts.extend(wrapped)
        if wrapped:
            parts.append("")
        parts.append(self.body_text.rstrip("\n"))
        parts.append("#ifdef __cplusplus")
        parts.append("}")
        parts.append("#endif")
        return "\n".join(parts) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.text)
        return path


# --- low-level text helpers -------------------------------------------------

def strip_comments(text: str) -> str:
    text = re.sub(r"/\*.*?\*/", lambda m: re.sub(r"[^\n]", " ", m.group()), text,
                  flags=re.S)
    return re.sub(r"//[^\n]*", "", text)


def _split_top_level(text: str, sep: str = ";"):
    """Split on sep at brace/paren depth 0."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "{(":
            depth += 1
        elif ch in "})":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return [p.strip() for p in parts if p.strip()]


def _identifiers(text: str):
    return _IDENT.findall(text)


# --- type listing parsing ---------------------------------------------------

def _parse_member(member: str, builtins):
    """Return (type_refs, by_value_refs) for one struct/union member."""
    member = member.strip()
    if not member:
        return set(), set()
    if "(*" in member or "( *" in member:
        # function-pointer member: all named types are by-reference
        refs = {t for t in _identifiers(member) if t not in builtins}
        # last identifier inside (*...) is the member name
        m = re.search(r"\(\s*\*\s*([A-Za-z_]\w*)\s*\)", member)
        if m:
            refs.discard(m.group(1))
        return refs, set()
    # strip array suffixes and bit widths
    core = re.sub(r"\[[^\]]*\]", "", member)
    core = core.split(":")[0]
    idents = _identifiers(core)
    if not idents:
        return set(), set()
    member_name = idents[-1]
    type_idents = [t for t in idents[:-1] if t not in C_KEYWORDS]
    refs = {t for t in type_idents if t not in builtins}
    by_value = refs if "*" not in core else set()
    return refs, set(by_value)


def parse_type_listing(text: str, source: str = "<types>",
                       builtins=DEFAULT_BUILTINS):
    """Parse the decompiler type-listing file into TypeDecl records."""
    clean = strip_comments(text)
    decls = []
    for raw in _split_top_level(clean):
        head = raw.split("{")[0]
        tokens = _identifiers(head)
        if not tokens:
            continue
        if tokens[0] == "typedef":
            if "(*" in raw.replace(" ", "")[:raw.find(")") + 1 if ")" in raw else len(raw)] or re.search(r"\(\s*\*", raw):
                m = re.search(r"\(\s*\*\s*([A-Za-z_]\w*)\s*\)", raw)
                if not m:
                    raise ParseFailure(source, raw[:40], "unparseable function-pointer typedef")
                name = m.group(1)
                refs = {t for t in _identifiers(raw)
                        if t not in builtins and t != name and t != "typedef"}
                decls.append(TypeDecl(name, DeclKind.FnPtrTypedef, raw + ";",
                                      frozenset(refs)))
            else:
                idents = [t for t in _identifiers(re.sub(r"\[[^\]]*\]", "", raw))
                          if t != "typedef"]
                if len(idents) < 2:
                    raise ParseFailure(source, raw[:40], "unparseable typedef")
                name = idents[-1]
                refs = {t for t in idents[:-1]
                        if t not in builtins and t not in C_KEYWORDS}
                decls.append(TypeDecl(name, DeclKind.Typedef, raw + ";",
                                      frozenset(refs)))
        elif tokens[0] in ("struct", "union"):
            if len(tokens) < 2:
                raise ParseFailure(source, raw[:40], "anonymous top-level UDT")
            name = tokens[1]
            kind = DeclKind.Struct if tokens[0] == "struct" else DeclKind.Union
            if "{" not in raw:
                continue  # bare forward declaration; emission adds these anyway
            body = raw[raw.find("{") + 1:raw.rfind("}")]
            if "{" in body:
                raise ParseFailure(source, name, "nested braces not supported")
            refs = set()
            for member in _split_top_level(body):
                r, _bv = _parse_member(member, builtins)
                refs |= r
            decls.append(TypeDecl(name, kind, raw + ";", frozenset(refs)))
        elif tokens[0] == "enum":
            if len(tokens) < 2:
                raise ParseFailure(source, raw[:40], "anonymous enum")
            decls.append(TypeDecl(tokens[1], DeclKind.Enum, raw + ";", frozenset()))
        else:
            raise ParseFailure(source, raw[:40], "unrecognized declaration")
    return decls


# --- type dependency graph --------------------------------------------------

def _resolve_to_udt(name, nodes, _seen=None):
    """Follow a typedef chain; return the UDT decl it aliases by value, if any."""
    _seen = _seen or set()
    if name in _seen:
        return None
    _seen.add(name)
    decl = nodes.get(name)
    if decl is None:
        return None
    if decl.decl_kind in (DeclKind.Struct, DeclKind.Union):
        return decl
    if decl.decl_kind == DeclKind.Typedef and "*" not in decl.body_text:
        for ref in decl.referenced_types:
            found = _resolve_to_udt(ref, nodes, _seen)
            if found is not None:
                return found
    return None


def build_tdg(decls, builtins=DEFAULT_BUILTINS) -> TypeDepGraph:
    """One node per declaration; edges in the three dependency categories.

    Pointer-valued member references never generate a by-value edge.
    """
    nodes = {}
    for d in decls:
        if d.name in nodes:
            raise ParseFailure("<types>", d.name, "duplicate type name")
        nodes[d.name] = d

    for d in decls:
        for ref in d.referenced_types:
            if ref not in nodes and ref not in builtins:
                raise UnknownReferencedType(ref)

    edges = set()
    for d in decls:
        if d.decl_kind == DeclKind.Typedef:
            cat = DepCategory.TypedefDep
        elif d.decl_kind == DeclKind.FnPtrTypedef:
            cat = DepCategory.FnPtrDep
        else:
            cat = None
        if cat is not None:
            for ref in d.referenced_types:
                if ref in nodes:
                    edges.add(DepEdge(ref, d.name, cat))
        if d.decl_kind in (DeclKind.Struct, DeclKind.Union):
            body = d.body_text[d.body_text.find("{") + 1:d.body_text.rfind("}")]
            for member in _split_top_level(body):
                refs, by_value = _parse_member(member, builtins)
                for ref in refs:
                    if ref not in nodes:
                        continue
                    if ref in by_value:
                        target = _resolve_to_udt(ref, nodes)
                        if target is not None:
                            edges.add(DepEdge(target.name, d.name,
                                              DepCategory.UdtMemberDep))
                            continue
                    edges.add(DepEdge(ref, d.name, DepCategory.TypedefDep))
    return TypeDepGraph(nodes=nodes, edges=edges)


def _topo_order(names, edges):
    """Kahn's algorithm; ties broken lexicographically for determinism."""
    names = sorted(names)
    indeg = {n: 0 for n in names}
    out = {n: [] for n in names}
    for src, dst in edges:
        if src in indeg and dst in indeg and src != dst:
            indeg[dst] += 1
            out[src].append(dst)
    ready = sorted(n for n in names if indeg[n] == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        changed = False
        for m in sorted(out[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(names):
        leftover = set(names) - set(order)
        raise CyclicByValueDependency(leftover)
    return order


def topo_emit(graph: TypeDepGraph, primitive_header: str) -> str:
    """Emit the unified header: primitives, forward declarations, enums,
    typedefs, then complete UDT definitions in by-value topological order."""
    parts = [primitive_header.rstrip("\n"), ""]

    udts = [d for d in graph.nodes.values()
            if d.decl_kind in (DeclKind.Struct, DeclKind.Union)]
    enums = [d for d in graph.nodes.values() if d.decl_kind == DeclKind.Enum]
    typedefs = [d for d in graph.nodes.values()
                if d.decl_kind in (DeclKind.Typedef, DeclKind.FnPtrTypedef)]

    if udts:
        parts.append("/* forward declarations */")
        for d in sorted(udts, key=lambda d: d.name):
            kw = "struct" if d.decl_kind == DeclKind.Struct else "union"
            parts.append(f"{kw} {d.name};")
        parts.append("")

    for d in sorted(enums, key=lambda d: d.name):
        parts.append(d.body_text)
        parts.append("")

    td_names = {d.name for d in typedefs}
    td_edges = [(e.src, e.dst) for e in graph.edges
                if e.src in td_names and e.dst in td_names]
    for name in _topo_order(td_names, td_edges):
        parts.append(graph.nodes[name].body_text)
    if typedefs:
        parts.append("")

    udt_names = {d.name for d in udts}
    bv_edges = [(e.src, e.dst) for e in graph.by_value_edges()
                if e.src in udt_names and e.dst in udt_names]
    for name in _topo_order(udt_names, bv_edges):
        parts.append(graph.nodes[name].body_text)
        parts.append("")

    return "\n".join(parts).rstrip("\n") + "\n"


# --- JUMPOUT artifacts ------------------------------------------------------

_JUMPOUT = re.compile(r"JUMPOUT\(\s*0[xX]([0-9a-fA-F]+)[^)]*\)\s*;")


def resolve_jumpout(stmt: str, symbol_table) -> tuple:
    """Rewrite an opaque jump artifact into a call when the address is a
    known function entry; otherwise leave it alone and flag it.

    symbol_table: iterable of records with .name/.offset/.kind (binmap
    SymbolRecord) or mapping name -> offset.

    Returns (new_text, flag_or_None).
    """
    m = _JUMPOUT.search(stmt)
    if not m:
        return stmt, None
    addr = int(m.group(1), 16)
    if hasattr(symbol_table, "items"):
        entries = {off: name for name, off in symbol_table.items()}
    else:
        entries = {rec.offset: rec.name for rec in symbol_table
                   if getattr(rec, "kind", None) is None
                   or rec.kind.value in ("HostFunction", "TargetFunction")}
    name = entries.get(addr)
    if name is None:
        return stmt, f"unresolved JUMPOUT target {addr:#x}"
    # braces keep the unreachable marker inside a braceless if/else arm
    replacement = f"{{ {name}(); __builtin_unreachable(); }}"
    return stmt[:m.start()] + replacement + stmt[m.end():], None


# --- corpus extraction ------------------------------------------------------

@dataclass
class CorpusContext:
    decls: list
    call_graph: dict            # fn -> set of callee names
    global_refs: dict           # fn -> set of referenced global names
    bodies: dict                # fn -> pseudocode text
    prototypes: dict            # name -> prototype text (no trailing ;)
    extern_globals: dict        # name -> extern declaration text
    known_globals: set
    symbol_table: list
    flags: list = field(default_factory=list)


_SIGNATURE = re.compile(r"^[^=;{}]*?\b([A-Za-z_]\w*)\s*\(", re.S)


def _function_name(text: str, source: str) -> str:
    clean = strip_comments(text)
    m = _SIGNATURE.match(clean.lstrip())
    if not m:
        raise ParseFailure(source, 1, "cannot find function signature")
    return m.group(1)


def _signature_text(text: str) -> str:
    """The prototype of the function defined in `text`."""
    clean = strip_comments(text).lstrip()
    depth = 0
    for i, ch in enumerate(clean):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return " ".join(clean[:i + 1].split())
        elif ch == "{":
            break
    raise ParseFailure("<signature>", 1, "unterminated signature")


def extract_calls(body: str) -> set:
    clean = strip_comments(body)
    names = set()
    sig_end = clean.find("{")
    scope = clean[sig_end:] if sig_end >= 0 else clean
    for m in _CALL.finditer(scope):
        name = m.group(1)
        if name not in _NOT_CALLS and name not in PRIMITIVE_TYPES:
            names.add(name)
    return names


def extract_decls(corpus_dir, symbol_table=None, builtins=DEFAULT_BUILTINS) -> CorpusContext:
    """Parse a corpus directory into declarations, a call graph and global refs.

    Layout: ``types.h`` (type listing), optional ``externs.h`` (prototypes and
    extern globals for out-of-corpus symbols), and one ``<fn>.c`` per function.
    """
    corpus_dir = Path(corpus_dir)
    types_path = corpus_dir / "types.h"
    decls = parse_type_listing(
        types_path.read_text() if types_path.exists() else "",
        source=str(types_path), builtins=builtins)

    prototypes = {}
    extern_globals = {}
    externs_path = corpus_dir / "externs.h"
    if externs_path.exists():
        for raw in _split_top_level(strip_comments(externs_path.read_text())):
            stmt = " ".join(raw.split())
            if not stmt:
                continue
            if "(" in stmt:
                name_m = re.search(r"\b([A-Za-z_]\w*)\s*\(", stmt)
                if not name_m:
                    raise ParseFailure(str(externs_path), stmt[:40], "bad prototype")
                prototypes[name_m.group(1)] = stmt
            else:
                ids = _identifiers(re.sub(r"\[[^\]]*\]", "", stmt))
                if not ids:
                    raise ParseFailure(str(externs_path), stmt[:40], "bad extern")
                extern_globals[ids[-1]] = stmt

    bodies = {}
    for path in sorted(corpus_dir.glob("*.c")):
        text = path.read_text()
        name = _function_name(text, str(path))
        bodies[name] = text
        prototypes.setdefault(name, _signature_text(text))

    known_globals = set(extern_globals)
    for rec in symbol_table or []:
        if getattr(rec, "kind", None) is not None and rec.kind.value == "GlobalData":
            known_globals.add(rec.name)

    call_graph = {}
    global_refs = {}
    for name, body in bodies.items():
        calls = extract_calls(body)
        calls.discard(name)
        call_graph[name] = calls
        idents = set(_identifiers(strip_comments(body)))
        global_refs[name] = idents & known_globals

    return CorpusContext(
        decls=decls,
        call_graph=call_graph,
        global_refs=global_refs,
        bodies=bodies,
        prototypes=prototypes,
        extern_globals=extern_globals,
        known_globals=known_globals,
        symbol_table=list(symbol_table or []),
    )


# --- unit assembly ----------------------------------------------------------

WEAK_ATTR = "__attribute__((weak))"


def _weaken(decl: str) -> str:
    decl = decl.rstrip().rstrip(";")
    return f"{decl} {WEAK_ATTR};"


def assemble_unit(ctx: CorpusContext, fn: str, header_ref: str = "unified.h") -> FunctionUnit:
    """Self-contained unit: unified header, externs for exactly the globals
    fn references, prototypes for exactly fn's callees, artifact-resolved body.

    Host-private callees and globals are declared weak so the module loads
    with unresolved references for the engine to back-patch. Callees that are
    neither in the corpus nor declared in externs are assumed to come from
    the platform headers (standard library).
    """
    if fn not in ctx.bodies:
        raise KeyError(fn)
    flags = []

    global_decls = []
    for name in sorted(ctx.global_refs.get(fn, ())):
        decl = ctx.extern_globals.get(name)
        if decl is None:
            flags.append(f"global {name} has no extern declaration")
            continue
        text = decl if decl.startswith("extern") else "extern " + decl
        global_decls.append(_weaken(text))

    callee_protos = []
    host_names = {rec.name for rec in ctx.symbol_table}
    for callee in sorted(ctx.call_graph.get(fn, ())):
        proto = ctx.prototypes.get(callee)
        if proto is None:
            if callee in host_names:
                raise MissingCalleePrototype(callee)
            continue  # platform/libc callee: declared by the unified header
        callee_protos.append(_weaken(proto))

    resolved_lines = []
    for line in ctx.bodies[fn].splitlines():
        if "JUMPOUT" in line:
            new_line, flag = resolve_jumpout(line, ctx.symbol_table)
            if flag:
                flags.append(f"{fn}: {flag}")
            resolved_lines.append(new_line)
        else:
            resolved_lines.append(line)
    body = "\n".join(resolved_lines)

    # artifact resolution can introduce calls to cold-path host functions
    # with no recovered prototype; declare them so the unit still compiles
    for name in sorted(extract_calls(body) - set(ctx.call_graph.get(fn, ())) - {fn}):
        proto = ctx.prototypes.get(name)
        if proto is not None:
            callee_protos.append(_weaken(proto))
        elif name in host_names:
            callee_protos.append(_weaken(f"extern void {name}(void)"))

    unit = FunctionUnit(
        name=fn,
        body_text=body,
        callee_prototypes=callee_protos,
        global_decls=global_decls,
        header_ref=header_ref,
        flags=flags,
    )
    ctx.flags.extend(flags)
    return unit


def emit_corpus(ctx: CorpusContext, out_dir, platform_includes=(),
                builtins=DEFAULT_BUILTINS) -> dict:
    """Write unified.h, one unit file per function and the flags report.

    Returns {fn: unit file path}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    primitive = PRIMITIVES_HEADER.read_text()
    include_lines = "".join(f"#include <{h}>\n" for h in platform_includes)
    header_text = topo_emit(build_tdg(ctx.decls, builtins=builtins),
                            include_lines + primitive)
    (out_dir / "unified.h").write_text(header_text)

    paths = {}
    for fn in sorted(ctx.bodies):
        unit = assemble_unit(ctx, fn)
        paths[fn] = unit.write(out_dir / f"{fn}.unit.cpp")
    report = {"unresolved": sorted(ctx.flags)}
    (out_dir / "flags.json").write_text(json.dumps(report, indent=2) + "\n")
    return paths
