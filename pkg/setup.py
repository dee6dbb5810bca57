"""Build hook for the optional compiled kernels.

The extension is marked optional: if Cython or a C compiler is missing the
package installs anyway and ``crtinfer.kernels`` falls back to pure Python.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "crtinfer._kernels",
                ["src/crtinfer/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
