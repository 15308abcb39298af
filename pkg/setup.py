"""Build script for the compiled query kernels.

The extension is optional: if no compiler (or Cython) is available the
package installs anyway and falls back to the pure-numpy kernels at import.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: skipping compiled kernels ({exc}); "
                  "the pure-python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to compile {ext.name} ({exc}); "
                  "the pure-python fallback will be used")


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    # -ffp-contract=off keeps a*b+c as two rounded ops; the compiled kernels
    # must stay bit-identical to the numpy fallback, and fma fusion (on by
    # default on some targets) would break that
    flags = [] if sys.platform == "win32" else ["-O2", "-ffp-contract=off"]
    ext = Extension(
        "dynbps._kernels._core",
        ["src/dynbps/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=flags,
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )


setup(ext_modules=make_extensions(), cmdclass={"build_ext": optional_build_ext})
