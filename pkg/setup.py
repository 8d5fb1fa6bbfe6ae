import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# no contraction or fast-math: the kernels must agree bit for bit with the numpy mirror
extensions = [
    Extension(
        "defectgas._kernels._ckernels",
        ["src/defectgas/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
