import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# Compiled hot kernels (conv3d packing + BLAS calls).  The extension is
# optional: if it fails to build, the package falls back to the pure
# numpy kernels at import time.
ext = Extension(
    "echoclutter.engine._kernels",
    sources=["src/echoclutter/engine/_kernels.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)
ext.optional = True

setup(ext_modules=cythonize([ext], language_level="3"))
