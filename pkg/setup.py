"""Build script: compiles the route-search kernel when Cython and a C
compiler are available.  The package works without it (pure-Python twin
selected at import), so any build failure degrades to a source-only install.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("RIDEPOOL_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "ridepool._pdpcore",
                    ["src/ridepool/_pdpcore.pyx"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
