import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the pure-Python kernels are used instead
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("WOTLAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "wotlab._kernels._ctransport",
                ["src/wotlab/_kernels/_ctransport.pyx"],
                include_dirs=[np.get_include()],
            ),
            Extension(
                "wotlab._kernels._csinkhorn",
                ["src/wotlab/_kernels/_csinkhorn.pyx"],
                include_dirs=[np.get_include()],
                libraries=["m"],
            ),
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
