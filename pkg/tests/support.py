"""Shared paths and skip marks for the test suite."""

import shutil
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
PREBUILT = REPO / "fixtures" / "prebuilt"
MANIFEST = PREBUILT / "corpus.json"


def have_tool(name):
    return shutil.which(name) is not None


requires_binutils = pytest.mark.skipif(
    not all(have_tool(t) for t in ("gcc", "g++", "nm", "readelf", "objdump")),
    reason="binutils/gcc toolchain not available")

requires_gdb = pytest.mark.skipif(not have_tool("gdb"),
                                  reason="gdb not available")
