from setuptools import Extension, setup
from Cython.Build import cythonize

# -O2 without -ffast-math: the compiled kernel must stay bit-compatible with
# the pure-Python reference path (same IEEE-754 operation order).
ext = Extension(
    "pamtwin._core",
    ["src/pamtwin/_core.pyx"],
    extra_compile_args=["-O2"],
)

setup(ext_modules=cythonize([ext], language_level=3))
