"""Builds the optional compiled kernel.  Without Cython or a C compiler the
package installs pure-Python and falls back at import."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("LNPATHLAB_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lnpathlab._ckernel",
                    ["src/lnpathlab/_ckernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    # identical float results to the Python fallback need
                    # strict IEEE evaluation: no FMA contraction, no fast-math
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
