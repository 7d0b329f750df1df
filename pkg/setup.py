"""Build script: compiles the optional segmentation kernel.

The package works without the extension (a pure-Python scanner is selected
at import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/steptag/segmenter/_speedups.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"steptag: skipping compiled scanner ({exc}); "
          "pure-Python fallback will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
