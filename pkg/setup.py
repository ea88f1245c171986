"""Build script: compiles the optional Cython assembly kernels.

The package works without the extension (a pure-numpy fallback is selected at
import time), so any build failure here downgrades to a plain installation
instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "stflow._kernels._core",
                sources=["src/stflow/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the C arithmetic bit-identical to the
                # numpy fallback (no fused multiply-add contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # noqa: BLE001 - any build-chain problem means "no extension"
    print(f"stflow: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
