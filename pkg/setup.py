"""Build script: compiles the optional Cython decoder core.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed, not functionality.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "polarq.backends._ckern",
                ["src/polarq/backends/_ckern.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - compile environment missing
    print(f"polarq: skipping compiled core ({exc!r}); using pure-python backend")
    extensions = []

setup(ext_modules=extensions)
