"""Builds the Rust extension with cargo and drops it where setuptools expects.

Neither maturin nor setuptools-rust is assumed; plain cargo plus a copy is
all an extension module needs. Install with:

    pip install -e . --no-build-isolation
"""

import json
import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

CRATE_DIR = Path(__file__).resolve().parent


def target_directory() -> Path:
    meta = subprocess.run(
        ["cargo", "metadata", "--format-version", "1", "--no-deps"],
        cwd=CRATE_DIR,
        check=True,
        capture_output=True,
        text=True,
    )
    return Path(json.loads(meta.stdout)["target_directory"])


class CargoBuild(build_ext):
    def build_extension(self, ext: Extension) -> None:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "sentinel-py"],
            cwd=CRATE_DIR,
            check=True,
        )
        release = target_directory() / "release"
        for name in ("libsentinel.so", "libsentinel.dylib", "sentinel.dll"):
            built = release / name
            if built.exists():
                break
        else:
            raise FileNotFoundError(f"no built extension library under {release}")
        out = Path(self.get_ext_fullpath(ext.name))
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, out)


setup(
    ext_modules=[Extension("sentinel", sources=[])],
    cmdclass={"build_ext": CargoBuild},
)
