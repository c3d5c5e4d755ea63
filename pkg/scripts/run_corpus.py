#!/usr/bin/env python3
"""Run the scripted-oracle pipeline over the prebuilt fixture corpus and
print the CS/BE summary table. Exit status 0 only at 100% behavioral
equivalence."""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resub.config import Config, load_config          # noqa: E402
from resub.harness import emit_report                 # noqa: E402
from resub.pipeline import run_corpus                 # noqa: E402

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", type=Path,
                        default=ROOT / "fixtures" / "prebuilt" / "corpus.json")
    parser.add_argument("--variant", choices=("clean", "defective"),
                        default="defective")
    parser.add_argument("--out", type=Path, default=None,
                        help="work directory (default: a fresh tempdir)")
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML/JSON run configuration")
    args = parser.parse_args(argv)

    cfg = load_config(args.config) if args.config else Config()
    out = args.out or Path(tempfile.mkdtemp(prefix="resub_corpus_"))
    report = run_corpus(args.manifest, cfg, variant=args.variant, out_dir=out)
    print(emit_report(report))
    print(f"artifacts: {out}")
    return 0 if report.function_be == 1.0 else 1


if __name__ == "__main__":
    sys.exit(main())
