"""Build script for the compiled kernels.

The extension is optional: if Cython or a C compiler is unavailable the
install still succeeds and the package uses its pure-Python kernels.

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "stemstep_eval.kernels._ckernels",
                ["src/stemstep_eval/kernels/_ckernels.pyx"],
                extra_compile_args=["-O2"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
