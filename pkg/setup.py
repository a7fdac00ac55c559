"""Build script for the optional compiled fusion kernels.

The package is fully functional without the extension: ``retsimd.kernels``
falls back to the pure NumPy implementation when ``_core`` is missing or
when RETSIMD_PURE_KERNELS=1 is set.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "retsimd.kernels._core",
                ["src/retsimd/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
