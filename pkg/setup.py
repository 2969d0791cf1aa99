"""Build the compiled RK4 kernel.

If Cython or a C compiler is missing the package still installs; the
pure-Python kernel is picked up at import time instead.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "convmatch._kernel",
                ["src/convmatch/_kernel.pyx"],
                # keep sin and cos as separate libm calls; a fused sincos can differ
                # from the Python fallback in the last bit
                extra_compile_args=["-O3", "-fno-builtin-sin", "-fno-builtin-cos"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
