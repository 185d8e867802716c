from setuptools import setup
from setuptools_rust import Binding, RustExtension

setup(
    rust_extensions=[
        RustExtension(
            "fredjost",
            path="Cargo.toml",
            binding=Binding.PyO3,
            features=["extension-module"],
        )
    ],
    zip_safe=False,
)
