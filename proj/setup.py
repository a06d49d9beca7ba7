"""Builds the native extension with the setuptools + pybind11 helpers.

Eigen is taken from pkg-config when available, otherwise from the standard
system location or the EIGEN3_INCLUDE_DIR environment variable.
"""

import os
import shutil
import subprocess

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup


def eigen_include_dir():
    env = os.environ.get("EIGEN3_INCLUDE_DIR")
    if env:
        return env
    if shutil.which("pkg-config"):
        probe = subprocess.run(
            ["pkg-config", "--cflags-only-I", "eigen3"],
            capture_output=True,
            text=True,
        )
        if probe.returncode == 0 and probe.stdout.strip():
            return probe.stdout.strip().split()[0][2:]
    fallback = "/usr/include/eigen3"
    if os.path.isdir(fallback):
        return fallback
    raise RuntimeError(
        "Eigen3 headers not found; set EIGEN3_INCLUDE_DIR or install eigen3"
    )


ext = Pybind11Extension(
    "divjudge._divjudge",
    sources=[
        "python/bindings.cpp",
        "src/distributions.cpp",
        "src/discriminator.cpp",
        "src/divergence.cpp",
        "src/gmm.cpp",
        "src/tabular.cpp",
        "src/harness.cpp",
    ],
    include_dirs=["include", "vendor", eigen_include_dir()],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
