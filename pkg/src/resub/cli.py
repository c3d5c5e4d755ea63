"""Command-line front end over the substitution stages.

Each stage is exposed standalone (extract-context, compile, map, inject-run,
trace, diff, repair) plus `pipeline` for the whole per-corpus run and
`fixtures build` for the test-corpus builder.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import click

from . import binmap, ctxbuild, reloc
from .buildloop import (CompileOptions, RepairBudget, ScriptedOracle,
                        compile_unit, repair_compile)
from .config import Config, load_config
from .diffrepair import build_delta, render_delta
from .errors import BudgetExhausted, ResubError
from .harness import RunReport, emit_report
from .pipeline import (TargetSpec, load_tests, prepare_runtime, run_corpus,
                       substitute_function)
from .tracekit import BinaryRole, ExecutionTrace


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML or JSON run configuration.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = load_config(config_path) if config_path else Config()


@main.command("extract-context")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--host", "host_image", type=click.Path(exists=True),
              help="Host binary; its symbols resolve JUMPOUT artifacts.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--platform-include", "platform_includes", multiple=True,
              help="Extra libc header for the unified header (repeatable).")
def extract_context(corpus_dir, host_image, out_dir, platform_includes):
    """Parse a pseudocode corpus and emit unified.h plus one unit per function."""
    symbols = binmap.scan_host_symbols(host_image) if host_image else []
    ctx = ctxbuild.extract_decls(corpus_dir, symbols)
    paths = ctxbuild.emit_corpus(ctx, out_dir,
                                 platform_includes=platform_includes)
    for fn, path in sorted(paths.items()):
        click.echo(f"{fn}: {path}")
    if ctx.flags:
        click.echo(f"{len(ctx.flags)} unresolved artifact(s); see flags.json",
                   err=True)


@main.command("compile")
@click.argument("unit", type=click.Path(exists=True, dir_okay=False))
@click.option("--sanitize/--no-sanitize", default=True)
@click.option("--output", type=click.Path(), default=None)
@click.pass_obj
def compile_cmd(cfg, unit, sanitize, output):
    """Compile one unit into a shared module; print diagnostics on failure."""
    options = CompileOptions(
        cc=cfg.compiler.cc, base_flags=tuple(cfg.compiler.base_flags),
        optimize=cfg.compiler.optimize, sanitize=sanitize,
        include_dirs=tuple(cfg.compiler.include_dirs),
        extra_flags=tuple(cfg.compiler.extra_flags),
        timeout=cfg.compiler.timeout)
    result = compile_unit(unit, options, output=output)
    if result.ok:
        click.echo(str(result.module_path))
        return
    for diag in result.diagnostics:
        click.echo(f"{diag.file}:{diag.line}: {diag.severity}: {diag.message}",
                   err=True)
    sys.exit(1)


@main.command("map")
@click.argument("host", type=click.Path(exists=True, dir_okay=False))
@click.argument("module", type=click.Path(exists=True, dir_okay=False))
@click.argument("function")
@click.option("--out", "out_path", type=click.Path(), default=None)
def map_cmd(host, module, function, out_path):
    """Build the host/module mapping table for one target function."""
    table = binmap.map_images(host, module, function)
    text = table.to_json()
    if out_path:
        Path(out_path).write_text(text)
        click.echo(out_path)
    else:
        click.echo(text, nl=False)
    if table.loader_resolved:
        click.echo(f"loader-resolved: {', '.join(table.loader_resolved)}",
                   err=True)


@main.command("inject-run", context_settings={"ignore_unknown_options": True})
@click.argument("host", type=click.Path(exists=True, dir_okay=False))
@click.argument("args", nargs=-1, type=click.UNPROCESSED)
@click.option("--mapping", type=click.Path(exists=True), required=True)
@click.option("--module", type=click.Path(exists=True), required=True)
@click.option("--function", default=None,
              help="Restrict hooking to one target.")
@click.option("--build-dir", type=click.Path(), default=".resub")
@click.option("--sanitized/--no-sanitized", default=True,
              help="Preload the sanitizer runtime for the instrumented module.")
@click.pass_obj
def inject_run(cfg, host, args, mapping, module, function, build_dir,
               sanitized):
    """Run HOST with the substitute installed, inheriting stdio."""
    runtime = prepare_runtime(build_dir,
                              sanitizer_runtime=cfg.harness.sanitizer_runtime)
    env = dict(os.environ)
    preloads = runtime.preloads if sanitized else [runtime.engine]
    env["LD_PRELOAD"] = ":".join(str(p) for p in preloads)
    env["RESUB_MAPPING"] = str(Path(mapping).resolve())
    env["RESUB_MODULE"] = str(Path(module).resolve())
    env["BINARY_NAME"] = os.path.basename(host)
    env.setdefault("ASAN_OPTIONS", "detect_leaks=0:verify_asan_link_order=0")
    if sanitized and runtime.sanitizer:
        env["RESUB_CELL_ADDR"] = f"{reloc.SANITIZER_SAFE_CELL_ADDRESS:x}"
    if function:
        env["FUNCTION_NAME"] = function
    proc = subprocess.run([str(Path(host).resolve()), *args], env=env)
    sys.exit(proc.returncode)


@main.command("diff")
@click.argument("trace_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("trace_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--function", default="")
@click.option("--json", "as_json", is_flag=True)
def diff_cmd(trace_a, trace_b, function, as_json):
    """Classify the divergence between two recorded traces."""
    from .diffrepair import delta_to_json
    a = ExecutionTrace.from_json(Path(trace_a).read_text())
    b = ExecutionTrace.from_json(Path(trace_b).read_text())
    delta = build_delta(function, a, b)
    click.echo(delta_to_json(delta) if as_json else render_delta(delta, {}))
    sys.exit(0 if delta.empty else 2)


@main.command("repair")
@click.argument("unit", type=click.Path(exists=True, dir_okay=False))
@click.option("--answer-key", type=click.Path(exists=True), required=True,
              help="JSON {prompt substring: patch response}.")
@click.pass_obj
def repair_cmd(cfg, unit, answer_key):
    """Run the bounded compile-repair loop with a scripted patch source."""
    client = ScriptedOracle(json.loads(Path(answer_key).read_text()))
    options = CompileOptions(
        cc=cfg.compiler.cc, optimize=cfg.compiler.optimize, sanitize=True,
        timeout=cfg.compiler.timeout)
    budget = RepairBudget(cfg.budget.compile_iters_max,
                          cfg.budget.runtime_iters_max)
    try:
        outcome = repair_compile(unit, client, budget, options)
    except BudgetExhausted:
        click.echo("budget exhausted; unit still does not compile", err=True)
        sys.exit(1)
    click.echo(f"{outcome.module_path} after {len(outcome.iterations)} "
               "repair iteration(s)")


@main.command("pipeline")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", type=click.Choice(["clean", "defective"]),
              default="defective")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--host", "hosts", multiple=True)
@click.option("--function", "functions", multiple=True)
@click.pass_obj
def pipeline_cmd(cfg, manifest, variant, out_dir, hosts, functions):
    """Substitute every function in a built corpus and report CS/BE."""
    report = run_corpus(manifest, cfg, variant=variant, out_dir=out_dir,
                        hosts=set(hosts) or None,
                        functions=set(functions) or None)
    click.echo(emit_report(report))


@main.command("report")
@click.argument("report_json", type=click.Path(exists=True, dir_okay=False))
def report_cmd(report_json):
    """Render a stored run report as the summary table."""
    report = RunReport.from_json(Path(report_json).read_text())
    click.echo(emit_report(report))


@main.group()
def fixtures():
    """Test-corpus management."""


@fixtures.command("build")
@click.option("--driver", type=click.Path(exists=True, dir_okay=False),
              default="fixtures/driver.py", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--host", "hosts", multiple=True)
def fixtures_build(driver, out_dir, hosts):
    """Invoke the standalone corpus builder."""
    argv = [sys.executable, str(driver), "build"]
    if out_dir:
        argv += ["--out", str(out_dir)]
    for host in hosts:
        argv += ["--host", host]
    proc = subprocess.run(argv)
    sys.exit(proc.returncode)


if __name__ == "__main__":
    main()
