from setuptools import setup, find_packages

setup(
    name="spectral_fusion",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    version="0.1.0",
)
