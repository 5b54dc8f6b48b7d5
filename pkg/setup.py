"""Build script for the optional compiled kernels.

Project metadata lives in pyproject.toml.  If Cython or a compiler is not
available the package still installs and falls back to numpy kernels.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - depends on build environment
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "memtestkit._native",
                ["src/memtestkit/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
