import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent.parent
DRIVER = FIXTURES / "driver.py"


@pytest.fixture(scope="session")
def built(tmp_path_factory):
    """A freshly built corpus in a scratch directory."""
    for tool in ("gcc", "nm", "readelf", "objdump"):
        if shutil.which(tool) is None:
            pytest.skip(f"{tool} not available")
    out = tmp_path_factory.mktemp("corpus")
    proc = subprocess.run(
        [sys.executable, str(DRIVER), "build", "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    return out


@pytest.fixture(scope="session")
def built_manifest(built):
    return json.loads((built / "corpus.json").read_text())
