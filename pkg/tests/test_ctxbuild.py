"""Type-listing parsing, the type dependency graph, unified-header emission
(with the compiler as oracle), artifact resolution and unit assembly."""

import subprocess
import textwrap

import pytest

from resub import ctxbuild
from resub.binmap import SymbolKind, SymbolRecord
from resub.ctxbuild import (DeclKind, DepCategory, assemble_unit, build_tdg,
                            emit_corpus, extract_calls, extract_decls,
                            parse_type_listing, resolve_jumpout, topo_emit)
from resub.errors import (CyclicByValueDependency, MissingCalleePrototype,
                          ParseFailure, UnknownReferencedType)

from support import PREBUILT, requires_binutils

TYPES = """\
typedef unsigned int uint;
typedef struct node node_t;
struct payload { int a; char tag[8]; };
struct node { struct node *next; struct payload data; uint weight; };
typedef int (*cmp_fn)(struct node *, struct node *);
enum color { RED, BLACK };
"""


def test_parse_type_listing_kinds():
    decls = {d.name: d for d in parse_type_listing(TYPES)}
    assert decls["uint"].decl_kind is DeclKind.Typedef
    assert decls["node_t"].decl_kind is DeclKind.Typedef
    assert decls["payload"].decl_kind is DeclKind.Struct
    assert decls["cmp_fn"].decl_kind is DeclKind.FnPtrTypedef
    assert decls["color"].decl_kind is DeclKind.Enum


def test_tdg_by_value_vs_pointer_members():
    graph = build_tdg(parse_type_listing(TYPES))
    bv = {(e.src, e.dst) for e in graph.by_value_edges()}
    # data is embedded by value; next is a pointer and must not force order
    assert ("payload", "node") in bv
    assert ("node", "node") not in bv
    cats = {(e.src, e.dst): e.category for e in graph.edges}
    assert cats[("node", "node_t")] is DepCategory.TypedefDep
    assert cats[("node", "cmp_fn")] is DepCategory.FnPtrDep


def test_typedef_chain_resolves_to_udt():
    listing = """\
    struct inner { int x; };
    typedef struct inner inner_t;
    struct outer { inner_t held; };
    """
    graph = build_tdg(parse_type_listing(textwrap.dedent(listing)))
    bv = {(e.src, e.dst) for e in graph.by_value_edges()}
    assert ("inner", "outer") in bv


def test_unknown_referenced_type():
    with pytest.raises(UnknownReferencedType):
        build_tdg(parse_type_listing("struct s { mystery_t m; };"))


def test_cyclic_by_value_rejected():
    listing = "struct a { struct b held; };\nstruct b { struct a held; };"
    with pytest.raises(CyclicByValueDependency) as exc:
        topo_emit(build_tdg(parse_type_listing(listing)), "")
    assert exc.value.names == {"a", "b"}


def test_parse_failures():
    with pytest.raises(ParseFailure):
        parse_type_listing("struct { int anon; };")
    with pytest.raises(ParseFailure):
        parse_type_listing("int stray_function(void) { return 1; }")


def header_for(listing):
    graph = build_tdg(parse_type_listing(listing))
    return topo_emit(graph, ctxbuild.PRIMITIVES_HEADER.read_text())


def test_topo_emit_orders_by_value_edges():
    header = header_for(TYPES)
    # by-value dependency: payload's definition precedes node's
    assert header.index("struct payload {") < header.index("struct node {")
    # forward declarations come before everything
    assert header.index("struct node;") < header.index("struct payload {")


@requires_binutils
def test_emitted_header_compiles_both_languages(tmp_path):
    header = header_for(TYPES)
    use = header + "\nstruct node probe;\ncmp_fn probe_fn;\n"
    for lang, std in (("c", "gcc"), ("c++", "g++")):
        src = tmp_path / ("probe." + ("c" if lang == "c" else "cpp"))
        src.write_text(use)
        proc = subprocess.run([std, "-fsyntax-only", "-Wall", str(src)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert proc.stderr == ""


# --- JUMPOUT artifacts -------------------------------------------------------

SYMS = [SymbolRecord("cold_abort", 0x1234, 40, ".text", SymbolKind.HostFunction),
        SymbolRecord("gFlag", 0x4000, 4, ".data", SymbolKind.GlobalData)]


def test_resolve_jumpout_known_target():
    text, flag = resolve_jumpout("    JUMPOUT(0x1234LL);", SYMS)
    assert flag is None
    assert "cold_abort();" in text and "__builtin_unreachable();" in text
    assert text.startswith("    {")


def test_resolve_jumpout_unknown_target_flagged():
    text, flag = resolve_jumpout("  JUMPOUT(0xDEADLL);", SYMS)
    assert "JUMPOUT" in text
    assert "0xdead" in flag


def test_resolve_jumpout_ignores_data_symbols():
    _text, flag = resolve_jumpout("JUMPOUT(0x4000LL);", SYMS)
    assert flag is not None


def test_extract_calls_skips_keywords_and_macros():
    body = """\
    int fn(int n)
    {
      if ( n > 0 )
        helper(n);
      while ( n-- )
        n = (int)other(n);
      JUMPOUT(0x10LL);
      return n;
    }
    """
    assert extract_calls(textwrap.dedent(body)) == {"helper", "other"}


# --- corpus extraction and unit assembly ------------------------------------

def write_corpus(d):
    (d / "types.h").write_text("struct acc { int total; int count; };\n")
    (d / "externs.h").write_text(
        "extern int gBase;\nint __fastcall helper(int a1);\n"
        "void cold_abort(void);\n")
    (d / "fn_use.c").write_text(textwrap.dedent("""\
        int __fastcall fn_use(struct acc *a1)
        {
          if ( !a1 )
            JUMPOUT(0x1234LL);
          return helper(a1->total) + gBase;
        }
        """))
    (d / "fn_plain.c").write_text(
        "int __fastcall fn_plain(int a1)\n{\n  return 2 * a1;\n}\n")


def test_extract_decls_builds_call_graph(tmp_path):
    write_corpus(tmp_path)
    ctx = extract_decls(tmp_path, SYMS)
    assert ctx.call_graph["fn_use"] == {"helper"}
    assert ctx.global_refs["fn_use"] == {"gBase"}
    assert ctx.call_graph["fn_plain"] == set()
    assert "fn_plain" in ctx.prototypes     # recovered from its own signature


def test_assemble_unit_weakens_host_private_decls(tmp_path):
    write_corpus(tmp_path)
    ctx = extract_decls(tmp_path, SYMS)
    unit = assemble_unit(ctx, "fn_use")
    text = unit.text
    assert 'extern int gBase __attribute__((weak));' in text
    assert 'int __fastcall helper(int a1) __attribute__((weak));' in text
    # the JUMPOUT target's prototype comes back even though the artifact
    # hid the call from the call graph
    assert 'void cold_abort(void) __attribute__((weak));' in text
    assert "cold_abort(); __builtin_unreachable();" in text
    assert text.count('extern "C"') == 1


def test_assemble_unit_missing_prototype_for_host_callee(tmp_path):
    write_corpus(tmp_path)
    (tmp_path / "fn_use.c").write_text(
        "int fn_use(int a1)\n{\n  return secret_host_fn(a1);\n}\n")
    syms = SYMS + [SymbolRecord("secret_host_fn", 0x2000, 32, ".text",
                                SymbolKind.HostFunction)]
    ctx = extract_decls(tmp_path, syms)
    with pytest.raises(MissingCalleePrototype):
        assemble_unit(ctx, "fn_use")


@requires_binutils
def test_emit_corpus_units_compile(tmp_path):
    src = tmp_path / "corpus"
    out = tmp_path / "out"
    src.mkdir()
    write_corpus(src)
    ctx = extract_decls(src, SYMS)
    paths = emit_corpus(ctx, out)
    assert set(paths) == {"fn_use", "fn_plain"}
    assert (out / "unified.h").exists()
    for unit in paths.values():
        proc = subprocess.run(
            ["g++", "-shared", "-fPIC", "-g", "-O1", "-o", "/dev/null",
             str(unit)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr


@requires_binutils
def test_prebuilt_corpora_parse_cleanly(manifest):
    for host, rec in manifest["hosts"].items():
        for variant in ("clean", "defective"):
            ctx = extract_decls(PREBUILT / rec["corpus"][variant])
            assert set(ctx.bodies) == set(rec["functions"])
