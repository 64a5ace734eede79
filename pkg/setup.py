import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels.py falls back
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "tsrnn._treekernel",
                ["src/tsrnn/_treekernel.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
