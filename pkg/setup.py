import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PANODEPTH_SKIP_NATIVE") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "panodepth._kernels",
                    ["src/panodepth/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython/numpy at build time: install pure-Python; the package
        # falls back to the numpy kernels at import.
        ext_modules = []

setup(ext_modules=ext_modules)
