import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GRIDBAND_PURE") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "gridband.kernels._fast",
                    ["src/gridband/kernels/_fast.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # Pure-python fallback in gridband.kernels covers every kernel.
        ext_modules = []

setup(ext_modules=ext_modules)
