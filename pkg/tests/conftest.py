import json
import subprocess

import pytest

from support import MANIFEST, PREBUILT


@pytest.fixture(scope="session")
def manifest():
    if not MANIFEST.exists():
        pytest.skip("prebuilt fixture corpus missing; run fixtures/driver.py build")
    return json.loads(MANIFEST.read_text())


@pytest.fixture(scope="session")
def prebuilt_dir(manifest):
    return PREBUILT


@pytest.fixture(scope="session")
def cc_module(tmp_path_factory):
    """Compile a C source string into a shared object; cached per content."""
    root = tmp_path_factory.mktemp("ccmod")
    cache = {}

    def build(source, name="mod", flags=()):
        key = (source, tuple(flags))
        if key in cache:
            return cache[key]
        d = root / f"{name}_{len(cache)}"
        d.mkdir()
        src = d / f"{name}.c"
        src.write_text(source)
        out = d / f"{name}.so"
        subprocess.run(["gcc", "-shared", "-fPIC", "-g", "-O0", *flags,
                        "-o", str(out), str(src)], check=True,
                       capture_output=True)
        cache[key] = out
        return out

    return build
