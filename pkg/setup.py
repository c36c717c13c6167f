"""Build hooks for the optional compiled kernels.

The package installs fine without a C toolchain; the extension is attempted and
skipped on failure (the pure numpy backend is selected at import time instead).
Set LQGSIM_NO_EXT=1 to skip the build attempt entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LQGSIM_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lqgsim._kernels",
                    ["src/lqgsim/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # kernels must be bit-identical to the pure backend:
                    # forbid FMA contraction
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # noqa: BLE001 - any build-chain failure degrades gracefully
        print(f"lqgsim: skipping compiled kernels ({exc}); pure backend will be used")
        ext_modules = []

setup(ext_modules=ext_modules)
