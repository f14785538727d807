from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "tns._tns",
    sources=[
        "python/bindings.cpp",
        "src/image_io.cpp",
        "src/scenegen.cpp",
        "src/dataset.cpp",
        "src/meshing.cpp",
        "src/metrics.cpp",
        "src/eval.cpp",
        "src/trainer.cpp",
    ],
    include_dirs=["include", "vendor", "/usr/include/eigen3"],
    libraries=["png"],
    cxx_std=20,
    extra_compile_args=["-O3", "-march=native"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
