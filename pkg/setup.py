"""Build hook for the optional compiled eval kernel.

The package works without the extension (pure-Python fallback is selected at
import); the build degrades gracefully when Cython or a C toolchain is
missing.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("cutoffcert._evalcore",
                   ["src/cutoffcert/kernel/_evalcore.pyx"],
                   include_dirs=[numpy.get_include()])],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover
    print(f"cutoffcert: building without compiled kernel ({exc})",
          file=sys.stderr)

setup(ext_modules=ext_modules)
