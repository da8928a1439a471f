"""Builds the optional compiled kernel core.

The package works without it (the numpy fallback is selected at import);
a failed extension build therefore only costs speed, never correctness.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "harmony.kernels._compiled",
        ["src/harmony/kernels/_compiled.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    pass

setup(ext_modules=ext_modules)
