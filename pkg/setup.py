"""Build the optional Cython raycast kernel.

The package works without it: navworld.sim.render falls back to a pure
numpy implementation when the compiled module is missing.
"""

import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/navworld/sim/_raycast_cy.pyx"],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, include_dirs=[np.get_include()])
