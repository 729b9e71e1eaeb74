from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback kernels still work without the extension
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "mumimo.solver._kernels",
                ["src/mumimo/solver/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
