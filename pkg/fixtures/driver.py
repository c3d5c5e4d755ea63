#!/usr/bin/env python3
"""Fixture corpus builder.

Compiles the host programs (main at -O2, target functions at -O0, all with
debug info), records golden outputs from the unsubstituted binaries, derives
the pseudocode corpus (clean and seeded-defect variants that share line
numbers with the binary's line table), and emits the sidecars the pipeline
consumes: per-binary symbol listings, per-function line maps, test suites
with recorded oracles, and the answer key of known fixes.

Deliberately standalone: only the system toolchain (gcc, nm, readelf,
objdump) and the stdlib. The package under src/ is never imported here.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent
SRC = FIXTURES / "src"

TAGS = ("Clean", "SignednessBranch", "FragmentedBuffer", "UninitializedBound",
        "TruncatedVarargs", "JumpoutArtifact")


class FixtureBuildFailed(Exception):
    pass


@dataclass(frozen=True)
class Sub:
    """One in-place text substitution (clean -> defective). Line-preserving by
    construction so the host's line table stays valid for the variant."""
    search: str
    replace: str
    occurrence: int = 1     # 1-based occurrence of `search` in the clean text


@dataclass(frozen=True)
class FnSpec:
    name: str
    tag: str
    subs: tuple = ()


@dataclass(frozen=True)
class HostSpec:
    name: str
    functions: tuple
    tests: tuple                      # (test_id, argv tuple)
    platform_includes: tuple = ()


# Defect catalogue. `@OFF:sym@` in a replacement is filled with the image
# offset of `sym` from the freshly built binary (jump targets are only known
# post-link).
HOSTS = (
    HostSpec(
        "calcstats",
        functions=(
            FnSpec("fn_sum", "Clean"),
            FnSpec("fn_mean", "SignednessBranch", (
                Sub("if ( (signed char)gFlags < 0 )", "if ( gFlags < 0 )"),
            )),
            FnSpec("fn_median", "FragmentedBuffer", (
                Sub("v6 = *(int *)((char *)v5 + 32);",
                    "v6 = *(int *)((char *)v5 + 36);"),
            )),
            FnSpec("fn_minmax", "Clean"),
        ),
        tests=(
            ("sample_small", ("0", "5", "3", "9", "1")),
            ("sample_roundup", ("0x80", "5", "3", "9", "1")),
            ("sample_full", ("0xC8", "12", "7", "3", "9", "15", "4", "8",
                             "2", "11", "6", "14", "1", "10", "5", "13",
                             "0", "16")),
        ),
    ),
    HostSpec(
        "textproc",
        functions=(
            FnSpec("fn_count_words", "Clean"),
            FnSpec("fn_quote", "UninitializedBound", (
                Sub("for ( i = 0; i < 4; ++i )", "for ( i = 0; i <= 4; ++i )"),
            )),
            FnSpec("fn_trim", "SignednessBranch", (
                Sub("if ( (signed char)a1[v2] < 0 )",
                    "if ( (unsigned __int8)a1[v2] < 0 )"),
            )),
        ),
        tests=(
            ("plain", ("hello world",)),
            ("specials", ('say "hi"\tnow',)),
            ("highbit", ("keep this! drop that",)),
        ),
    ),
    HostSpec(
        "checksum",
        functions=(
            FnSpec("fn_adler", "UninitializedBound", (
                Sub("for ( j = 0; j < v6; ++j )",
                    "for ( j = 0; j <= v6; ++j )", occurrence=2),
            )),
            FnSpec("fn_crc_step", "JumpoutArtifact", (
                Sub("crc_panic();", "JUMPOUT(0x@OFF:crc_panic@LL);"),
            )),
            FnSpec("fn_mix", "FragmentedBuffer", (
                Sub("*(unsigned int *)&v3[28] = gSeed;",
                    "*(unsigned int *)&v3[28] = 0;"),
            )),
        ),
        # fn_adler copies in 16-byte blocks; keep inputs block-aligned so the
        # seeded off-by-one lands in the redzone instead of reading a stale
        # in-bounds byte.
        tests=(
            ("block16", ("abcdefghijklmnop",)),
            ("block32", ("0123456789abcdef0123456789abcdef",)),
            ("altpoly", ("abcdefghijklmnop", "0x04C11DB7")),
            ("zeropoly", ("abcdefghijklmnop", "0")),
        ),
    ),
    HostSpec(
        "fmtlog",
        functions=(
            FnSpec("fn_itoa", "Clean"),
            FnSpec("fn_sumfmt", "TruncatedVarargs", (
                Sub("for ( i = 0; i < a1; ++i )",
                    "for ( i = 0; i < a1 - 1; ++i )"),
            )),
            FnSpec("fn_warnfmt", "TruncatedVarargs", (
                Sub("for ( i = 0; i < a1; ++i )",
                    "for ( i = 0; i < a1 - 1; ++i )"),
            )),
            FnSpec("fn_logfmt", "TruncatedVarargs", (
                Sub("for ( i = 0; i < a2; ++i )",
                    "for ( i = 0; i < a2 - 1; ++i )"),
            )),
        ),
        tests=(
            ("mixed", ("3", "1", "4", "1")),
            ("max_last", ("2", "-5", "8", "40")),
            ("negative", ("-7", "0", "13", "5")),
        ),
        platform_includes=("stdarg.h",),
    ),
    HostSpec(
        "tablescan",
        functions=(
            FnSpec("fn_lookup", "JumpoutArtifact", (
                Sub("tab_panic();", "JUMPOUT(0x@OFF:tab_panic@LL);"),
            )),
            FnSpec("fn_insert", "JumpoutArtifact", (
                Sub("tab_panic();", "JUMPOUT(0x@OFF:tab_panic@LL);"),
            )),
            FnSpec("fn_scan_max", "UninitializedBound", (
                Sub("for ( i = 0; i < a1->count; ++i )",
                    "for ( i = 0; i <= a1->count; ++i )", occurrence=1),
            )),
            FnSpec("fn_find_min", "Clean"),
        ),
        tests=(
            ("sparse", ("7:70", "1:10", "3:30")),
            ("update", ("5:50", "5:60", "9:90")),
            ("full16", tuple(f"{k}:{k * 10}" for k in range(1, 17))),
            ("overflow", tuple(f"{k}:{k}" for k in range(1, 18))),
        ),
    ),
    HostSpec(
        "bitops",
        functions=(
            FnSpec("fn_popcnt", "Clean"),
            FnSpec("fn_parity", "Clean"),
            FnSpec("fn_rotl", "Clean"),
            FnSpec("fn_clamp", "SignednessBranch", (
                Sub("if ( v2 > (int)(unsigned __int8)gLim )",
                    "if ( v2 > (int)(signed char)gLim )"),
                Sub("v2 = (unsigned __int8)gLim;", "v2 = (signed char)gLim;"),
            )),
            FnSpec("fn_pack", "FragmentedBuffer", (
                Sub("v4 = v4 + *(unsigned __int16 *)&v3[6];",
                    "v4 = v4 + *(unsigned __int16 *)&v3[0];"),
            )),
        ),
        tests=(
            ("highlim", ("0x90", "100", "200", "0x12345678")),
            ("lowlim", ("10", "3", "255")),
            ("edges", ("0", "0", "1", "0x80000000")),
        ),
    ),
)


# --- text surgery -----------------------------------------------------------

def _nth_index(text: str, needle: str, occurrence: int) -> int:
    pos = -1
    for _ in range(occurrence):
        pos = text.find(needle, pos + 1)
        if pos < 0:
            return -1
    return pos


def apply_subs(clean: str, subs, offsets=None) -> str:
    """clean -> defective. Every search string must be present; replacements
    must not change the line count."""
    text = clean
    for sub in subs:
        replace = sub.replace
        for m in re.finditer(r"@OFF:(\w+)@", replace):
            sym = m.group(1)
            if offsets is None or sym not in offsets:
                raise FixtureBuildFailed(f"no image offset for {sym}")
            replace = replace.replace(m.group(0), f"{offsets[sym]:X}")
        pos = _nth_index(text, sub.search, sub.occurrence)
        if pos < 0:
            raise FixtureBuildFailed(
                f"substitution target not found (occurrence {sub.occurrence}): "
                f"{sub.search!r}")
        if replace.count("\n") != sub.search.count("\n"):
            raise FixtureBuildFailed(f"not line-preserving: {sub.search!r}")
        text = text[:pos] + replace + text[pos + len(sub.search):]
    return text


def inverse_subs(defective: str, subs, offsets=None):
    """The known fix: (search, replace) pairs that undo `subs` on the
    defective text, each unique there so first-occurrence application is
    well defined."""
    pairs = []
    for sub in subs:
        replace = sub.replace
        for m in re.finditer(r"@OFF:(\w+)@", replace):
            replace = replace.replace(m.group(0), f"{offsets[m.group(1)]:X}")
        if defective.count(replace) != 1:
            raise FixtureBuildFailed(
                f"defective text for inverse patch not unique: {replace!r}")
        pairs.append((replace, sub.search))
    return pairs


# --- toolchain --------------------------------------------------------------

def run(argv, **kw):
    proc = subprocess.run(argv, capture_output=True, text=True, **kw)
    if proc.returncode != 0:
        raise FixtureBuildFailed(
            f"{' '.join(map(str, argv))}\n{proc.stdout}{proc.stderr}")
    return proc.stdout


def compile_host(host: HostSpec, out: Path) -> Path:
    srcdir = SRC / host.name
    tudir = out / "tu"
    tudir.mkdir(parents=True, exist_ok=True)
    objs = []

    main_o = tudir / "main.o"
    run(["gcc", "-O2", "-g", "-c", str(srcdir / "main.c"), "-o", str(main_o)])
    objs.append(main_o)

    for fn in host.functions:
        tu = tudir / f"{fn.name}_tu.c"
        tu.write_text(
            f'#include "{FIXTURES}/defs.h"\n'
            f'#include "{srcdir}/{host.name}.h"\n'
            f'#include "{srcdir}/{fn.name}.c"\n')
        obj = tudir / f"{fn.name}.o"
        run(["gcc", "-O0", "-g", "-c", str(tu), "-o", str(obj)])
        objs.append(obj)

    bindir = out / "bin"
    bindir.mkdir(exist_ok=True)
    binary = bindir / host.name
    run(["gcc", "-g", "-o", str(binary)] + [str(o) for o in objs])
    return binary


def load_bias(binary: Path) -> int:
    out = run(["readelf", "-l", "-W", str(binary)])
    vaddrs = [int(m.group(1), 16)
              for m in re.finditer(r"^\s*LOAD\s+\S+\s+(0x[0-9a-f]+)", out, re.M)]
    if not vaddrs:
        raise FixtureBuildFailed(f"no LOAD segments in {binary}")
    return min(vaddrs)


def read_symbols(binary: Path, names) -> dict:
    """name -> {image_offset, size, kind} for the requested names."""
    bias = load_bias(binary)
    table = {}
    out = run(["nm", "-S", "--defined-only", str(binary)])
    for row in out.splitlines():
        parts = row.split()
        if len(parts) == 4:
            value, size, kind, name = parts
        elif len(parts) == 3:
            value, kind, name = parts
            size = "0"
        else:
            continue
        if name not in names:
            continue
        table[name] = {
            "image_offset": int(value, 16) - bias,
            "size": int(size, 16),
            "kind": "func" if kind.lower() == "t" else "object",
        }
    missing = set(names) - set(table)
    if missing:
        raise FixtureBuildFailed(f"symbols absent from {binary}: {missing}")
    return table


def read_linemaps(binary: Path, sources) -> dict:
    """basename -> {line: image_offset}, lowest offset per line."""
    bias = load_bias(binary)
    out = run(["objdump", "--dwarf=decodedline", str(binary)])
    maps = {os.path.basename(s): {} for s in sources}
    for row in out.splitlines():
        parts = row.split()
        if len(parts) < 3 or not parts[1].isdigit():
            continue
        base = os.path.basename(parts[0])
        if base not in maps or not parts[2].startswith("0x"):
            continue
        line, offset = int(parts[1]), int(parts[2], 16) - bias
        if line not in maps[base] or offset < maps[base][line]:
            maps[base][line] = offset
    for base, table in maps.items():
        if not table:
            raise FixtureBuildFailed(f"no line rows for {base} in {binary}")
    return maps


def record_oracles(binary: Path, tests) -> list:
    env = {k: v for k, v in os.environ.items()
           if k in ("PATH", "HOME", "LANG")}
    recorded = []
    for test_id, argv in tests:
        with tempfile.TemporaryDirectory(prefix="fixture_oracle_") as scratch:
            proc = subprocess.run([str(binary), *argv], capture_output=True,
                                  text=True, env=env, cwd=scratch, timeout=120)
        recorded.append({
            "id": test_id,
            "argv": list(argv),
            "oracle": {
                "stdout": proc.stdout,
                "stderr": proc.stderr,
                "exit_code": proc.returncode,
            },
        })
    return recorded


# --- corpus assembly --------------------------------------------------------

def _read_optional(path: Path) -> str:
    return path.read_text() if path.exists() else ""


def write_corpus_dir(dest: Path, host: HostSpec, bodies: dict):
    dest.mkdir(parents=True, exist_ok=True)
    srcdir = SRC / host.name
    (dest / "types.h").write_text(_read_optional(srcdir / "corpus_types.h"))
    (dest / "externs.h").write_text(_read_optional(srcdir / "corpus_externs.h"))
    for fn, text in bodies.items():
        (dest / f"{fn}.c").write_text(text)


_EXTERN_C_HEAD = "#ifdef __cplusplus\nextern \"C\" {\n#endif"


def _extern_global_decls(extern_text: str) -> dict:
    """name -> full extern declaration, for data externs only."""
    out = {}
    for line in extern_text.splitlines():
        line = line.strip()
        if line.startswith("extern") and "(" not in line and line.endswith(";"):
            name = re.findall(r"(\w+)\s*;", line)[0]
            out[name] = line
    return out


def fix_response(fn: str, pairs, extra_decls=()) -> str:
    """A patch-generator reply applying the known fix to the function's unit.

    ``extra_decls`` are extern declarations the fix depends on that the
    defective unit never needed (the variant lost the reference, so the
    assembler emitted no weak extern for it)."""
    chunks = []
    if extra_decls:
        decls = "\n".join(extra_decls)
        chunks.append(
            f"{fn}.unit.cpp\n"
            "```c\n"
            "<<<<<<< SEARCH\n"
            f"{_EXTERN_C_HEAD}\n"
            "=======\n"
            f"{_EXTERN_C_HEAD}\n{decls}\n"
            ">>>>>>> REPLACE\n"
            "```\n")
    for search, replace in pairs:
        chunks.append(
            f"{fn}.unit.cpp\n"
            "```c\n"
            "<<<<<<< SEARCH\n"
            f"{search}\n"
            "=======\n"
            f"{replace}\n"
            ">>>>>>> REPLACE\n"
            "```\n")
    return "\n".join(chunks)


REPAIR_TAGS = {"SignednessBranch", "FragmentedBuffer", "UninitializedBound",
               "TruncatedVarargs"}


def build_host(host: HostSpec, out_root: Path) -> dict:
    out = out_root / host.name
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)

    binary = compile_host(host, out)

    fn_names = [fn.name for fn in host.functions]
    wanted = set(fn_names) | {"main"}
    for fn in host.functions:
        for sub in fn.subs:
            wanted.update(re.findall(r"@OFF:(\w+)@", sub.replace))
    srcdir = SRC / host.name
    extern_text = _read_optional(srcdir / "corpus_externs.h")
    wanted.update(re.findall(r"\bextern\b[^;]*?(\w+)\s*;", extern_text))
    for m in re.finditer(r"^\s*void\s+(\w+)\s*\(", extern_text, re.M):
        wanted.add(m.group(1))

    symbols = read_symbols(binary, wanted)
    offsets = {name: rec["image_offset"] for name, rec in symbols.items()}
    (out / "symbols.json").write_text(json.dumps(symbols, indent=2) + "\n")

    linemaps = read_linemaps(binary, [f"{fn}.c" for fn in fn_names])
    for fn in fn_names:
        payload = {"source": f"{fn}.c",
                   "lines": {str(k): v for k, v in
                             sorted(linemaps[f"{fn}.c"].items())}}
        (out / f"linemap_{fn}.json").write_text(
            json.dumps(payload, indent=2) + "\n")

    tests = record_oracles(binary, host.tests)
    (out / "tests.json").write_text(json.dumps(tests, indent=2) + "\n")

    clean_bodies = {fn.name: (srcdir / f"{fn.name}.c").read_text()
                    for fn in host.functions}
    defective_bodies = {}
    answer_key = {}
    cases = {}
    for fn in host.functions:
        clean = clean_bodies[fn.name]
        defective = apply_subs(clean, fn.subs, offsets)
        defective_bodies[fn.name] = defective
        case = {"tag": fn.tag, "defective": bool(fn.subs)}
        if fn.subs:
            pairs = inverse_subs(defective, fn.subs, offsets)
            restored = defective
            for search, replace in pairs:
                restored = restored.replace(search, replace, 1)
            if restored != clean:
                raise FixtureBuildFailed(
                    f"{host.name}/{fn.name}: known fix does not restore the "
                    "clean variant")
            case["known_fix"] = [{"search": s, "replace": r}
                                 for s, r in pairs]
            if fn.tag in REPAIR_TAGS:
                extra = []
                for name, decl in _extern_global_decls(extern_text).items():
                    reintroduced = any(
                        name in re.findall(r"\w+", rep) for _, rep in pairs)
                    if reintroduced and name not in re.findall(
                            r"\w+", defective):
                        extra.append(
                            decl.rstrip(";") + " __attribute__((weak));")
                answer_key[f"{fn.name}("] = fix_response(fn.name, pairs, extra)
        cases[fn.name] = case

    write_corpus_dir(out / "corpus" / "clean", host, clean_bodies)
    write_corpus_dir(out / "corpus" / "defective", host, defective_bodies)
    (out / "answer_key.json").write_text(json.dumps(answer_key, indent=2) + "\n")
    (out / "cases.json").write_text(json.dumps(cases, indent=2) + "\n")

    return {
        "binary": f"{host.name}/bin/{host.name}",
        "platform_includes": list(host.platform_includes),
        "symbols": f"{host.name}/symbols.json",
        "tests": f"{host.name}/tests.json",
        "answer_key": f"{host.name}/answer_key.json",
        "cases": f"{host.name}/cases.json",
        "corpus": {
            "clean": f"{host.name}/corpus/clean",
            "defective": f"{host.name}/corpus/defective",
        },
        "functions": {
            fn.name: {
                "tag": fn.tag,
                "defective": bool(fn.subs),
                "pseudo_source": f"{fn.name}.c",
                "linemap": f"{host.name}/linemap_{fn.name}.json",
            }
            for fn in host.functions
        },
    }


def build_corpus(out_root: Path, only=None) -> dict:
    out_root.mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "hosts": {}}
    for host in HOSTS:
        if only and host.name not in only:
            continue
        manifest["hosts"][host.name] = build_host(host, out_root)
    if not only:
        counts = {tag: 0 for tag in TAGS}
        total = 0
        for rec in manifest["hosts"].values():
            for meta in rec["functions"].values():
                counts[meta["tag"]] += 1
                total += 1
        manifest["tag_counts"] = counts
        manifest["total_functions"] = total
        (out_root / "corpus.json").write_text(
            json.dumps(manifest, indent=2) + "\n")
    return manifest


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("build", help="compile hosts and emit the corpus")
    b.add_argument("--out", type=Path, default=FIXTURES / "prebuilt")
    b.add_argument("--host", action="append", dest="hosts",
                   help="limit to the named host (repeatable)")
    args = parser.parse_args(argv)

    manifest = build_corpus(args.out, only=args.hosts)
    for name, rec in sorted(manifest["hosts"].items()):
        tags = [m["tag"] for m in rec["functions"].values()]
        print(f"{name}: {len(tags)} functions "
              f"({sum(t != 'Clean' for t in tags)} defective)")
    if "tag_counts" in manifest:
        print("tags:", json.dumps(manifest["tag_counts"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
