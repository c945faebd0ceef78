"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed, not functionality.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/commgate/nn/_kernels_cy.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"commgate: skipping Cython extension ({exc}); "
                     "pure-python kernels will be used\n")

setup(ext_modules=ext_modules)
