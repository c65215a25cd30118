import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: the package falls back to the pure
# numpy/tape implementation when they are absent or fail to build.
ext_modules = []
if cythonize is not None and not os.environ.get("ADVEMB_NO_EXT"):
    ext = Extension(
        "advemb._kernels",
        ["src/advemb/_kernels.pyx"],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
